"""Independent reference values for the frozen tests in crates/core/tests/derived.rs.

Builds the lattices from scratch with numpy/mpmath (no shared code with the
Rust crate) and prints the numbers that the Rust tests pin.

    python3 tools/oracle.py
"""
import itertools
import json

import mpmath as mp
import numpy as np

mp.mp.dps = 40
S3 = np.sqrt(3.0)


def kagome():
    v1, v2 = np.array([2.0, 0.0]), np.array([1.0, S3])
    nodes = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.5, S3 / 2])]
    # Up triangle (0,1,2) in the cell; down triangle at node 1 with node 0 of
    # cell (1,0) and node 2 of cell (1,-1).
    springs = [((0, 0, 0), (1, 0, 0)), ((1, 0, 0), (2, 0, 0)), ((2, 0, 0), (0, 0, 0)),
               ((1, 0, 0), (0, 1, 0)), ((0, 1, 0), (2, 1, -1)), ((2, 1, -1), (1, 0, 0))]
    tris = [((0, 0, 0), (1, 0, 0), (2, 0, 0)), ((1, 0, 0), (2, 1, -1), (0, 1, 0))]
    return v1, v2, nodes, [(a, b, 1.0) for a, b in springs], tris


def squares():
    v1, v2 = np.array([2.0, 0.0]), np.array([0.0, 2.0])
    nodes = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])]
    idx = {(0, 0): 0, (1, 0): 1, (0, 1): 2, (1, 1): 3}

    def g(a, b):
        return (idx[(a % 2, b % 2)], a // 2, b // 2)

    springs = []
    for o in (0, 1):
        c = [g(o, o), g(o + 1, o), g(o + 1, o + 1), g(o, o + 1)]
        for i in range(4):
            springs.append((c[i], c[(i + 1) % 4], 1.0))
        springs.append((c[0], c[2], 2.0) if o == 0 else (c[1], c[3], 2.0))
    return v1, v2, nodes, springs, None


def pos(lat, n):
    v1, v2, nodes = lat[0], lat[1], lat[2]
    b, i, j = n
    return nodes[b] + i * v1 + j * v2


def energy(lat, lam, k=1):
    e = 0.0
    for a, b, st in lat[3]:
        xa, xb = pos(lat, a), pos(lat, b)
        d = lam @ (xb - xa)
        e += st * (np.linalg.norm(d) - np.linalg.norm(xb - xa)) ** 2
    return e * k * k


def kernel(lat, k):
    """Raw kernel dimension of the linearised spring constraints at the
    reference state, unknowns (lambda, psi) on a k x k supercell."""
    nb = len(lat[2])
    nn = nb * k * k
    rows = []
    for ci, cj in itertools.product(range(k), range(k)):
        for a, b, _ in lat[3]:
            na = (a[0], ci + a[1], cj + a[2])
            nb_ = (b[0], ci + b[1], cj + b[2])
            xa, xb = pos(lat, na), pos(lat, nb_)
            d = xb - xa
            row = np.zeros(4 + 2 * nn)
            row[0:2] = d[0] * d
            row[2:4] = d[1] * d
            ia = a[0] * k * k + (na[1] % k) * k + na[2] % k
            ib = b[0] * k * k + (nb_[1] % k) * k + nb_[2] % k
            row[4 + 2 * ib:6 + 2 * ib] += d
            row[4 + 2 * ia:6 + 2 * ia] -= d
            rows.append(row)
    m = np.array(rows)
    rank = np.linalg.matrix_rank(m, tol=1e-9)
    return {"unknowns": int(m.shape[1]), "constraints": int(m.shape[0]), "kernel": int(m.shape[1] - rank)}


def kagome_twist_compression(theta):
    """Rotate the up triangle by +theta and the down triangle by -theta about
    the shared node and solve for lambda by least squares."""
    v1, v2, nodes, _, _ = kagome()
    r = lambda t: np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    b = nodes[1]
    up = {n: b + r(theta) @ (nodes[n] - b) for n in (0, 2)}
    # Down triangle nodes: A' = node0 + v1, C' = node2 + v1 - v2.
    a_ref, c_ref = nodes[0] + v1, nodes[2] + v1 - v2
    a_new = b + r(-theta) @ (a_ref - b)
    c_new = b + r(-theta) @ (c_ref - b)
    # lambda v1 = a_new - up[0]; lambda (v1 - v2) = c_new - up[2]
    lv1 = a_new - up[0]
    lv12 = c_new - up[2]
    lam = np.column_stack([lv1, lv1 - lv12]) @ np.linalg.inv(np.column_stack([v1, v2]))
    s = np.linalg.svd(lam, compute_uv=False)
    return lam, s


def wall_angles(theta1, n):
    pi3 = mp.pi / 3
    th = [2 * mp.pi / 3, mp.mpf(theta1)]
    while len(th) < n:
        a, b = th[-2], th[-1]
        s = mp.sin(a - pi3) - mp.sin(b - pi3) + mp.sin(b)
        cands = [mp.asin(s), mp.pi - mp.asin(s)]
        cands = [c for c in cands if pi3 - 1e-30 <= c <= mp.pi + 1e-30]
        th.append(min(cands, key=lambda c: abs(c - b)))
    return th


def lower_bracket(lam):
    s = np.linalg.svd(lam, compute_uv=False)
    l1, l2 = s
    p = lambda x: max(x, 0.0) ** 2
    mix = (l1 - l2) ** 2 if np.linalg.det(lam) >= 0 else (l1 + l2) ** 2
    return mix + p(l1 - 1) + p(l2 - 1)


def main():
    out = {}
    kg, rs = kagome(), squares()
    out["kagome_stretch2_spring"] = energy(kg, 2 * np.eye(2))
    out["kagome_stretch2_averaged"] = energy(kg, 2 * np.eye(2)) / abs(kg[0][0] * kg[1][1] - kg[0][1] * kg[1][0])
    out["rs_stretch_diag_1p5_1_spring"] = energy(rs, np.diag([1.5, 1.0]))
    out["kernel_kagome_k2"] = kernel(kg, 2)
    out["kernel_rs_k2"] = kernel(rs, 2)
    out["kernel_kagome_k1"] = kernel(kg, 1)
    out["kernel_rs_k1"] = kernel(rs, 1)
    tw = {}
    for t in (0.3, 0.7, 1.2):
        lam, s = kagome_twist_compression(t)
        tw[str(t)] = {"lambda": lam.tolist(), "stretches": s.tolist()}
    out["kagome_twist"] = tw
    th = wall_angles("2.8", 21)
    out["wall_2p8"] = [float(x) for x in th]
    # Fixed point of uniform angles: any value works, so record the
    # independent limit of the sequence instead.
    out["wall_2p8_limit"] = float(wall_angles("2.8", 200)[-1])
    near = wall_angles("2.12", 21)
    out["wall_2p12_gap_20_10"] = float(abs(near[20] - near[10]))
    lo, hi = mp.mpf(2) * mp.pi / 3 + mp.mpf("1e-6"), mp.mpf("2.17")
    for _ in range(60):
        mid = (lo + hi) / 2
        a = wall_angles(mid, 21)
        if abs(a[20] - a[10]) >= mp.mpf("1e-3"):
            lo = mid
        else:
            hi = mid
    out["wall_gap_threshold"] = float(hi)
    out["lower_bracket"] = {
        "diag(2,2)": lower_bracket(np.diag([2.0, 2.0])),
        "diag(1,-1)": lower_bracket(np.diag([1.0, -1.0])),
        "[[1.1,0.3],[-0.2,0.7]]": lower_bracket(np.array([[1.1, 0.3], [-0.2, 0.7]])),
        "[[0.4,1.3],[0.9,-0.5]]": lower_bracket(np.array([[0.4, 1.3], [0.9, -0.5]])),
    }
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
