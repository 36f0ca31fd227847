"""Regenerates oracles.json: exact symbolic values of the Faddeev right-hand sides, their
time-acceleration Jacobian and the modified energy densities at random rational jets."""
import json
import random

import sympy as sp

random.seed(20240611)
DIGITS = 30


def rat():
    return sp.Rational(random.randint(-60, 60), random.choice([20, 40, 50]))


def metric(n):
    return sp.diag(*([1] + [-1] * n))


def coords(n):
    return sp.symbols("x0:%d" % (n + 1))


def quad(X, value, d1, d2):
    n1 = len(X)
    e = value + sum(d1[m] * X[m] for m in range(n1))
    e += sum(sp.Rational(1, 2) * d2[m][k] * X[m] * X[k] for m in range(n1) for k in range(n1))
    return e


def grad(f, X):
    return [sp.diff(f, x) for x in X]


def q_low(f, g, X):
    df, dg = grad(f, X), grad(g, X)
    n1 = len(X)
    return [[df[m] * dg[k] - df[k] * dg[m] for k in range(n1)] for m in range(n1)]


def raise2(T, eta):
    n1 = eta.shape[0]
    return [[eta[m, m] * eta[k, k] * T[m][k] for k in range(n1)] for m in range(n1)]


def contract(A, B):
    n1 = len(A)
    return sum(A[m][k] * B[m][k] for m in range(n1) for k in range(n1))


def nested(f, H, X):
    # Q_{mu nu}(f, H^{mu nu}) with H a tensor field
    n1 = len(X)
    df = grad(f, X)
    return sum(df[m] * sp.diff(H[m][k], X[k]) - df[k] * sp.diff(H[m][k], X[m]) for m in range(n1) for k in range(n1))


def q0(f, g, X, eta):
    df, dg = grad(f, X), grad(g, X)
    return sum(eta[m, m] * df[m] * dg[m] for m in range(len(X)))


def box(f, X, eta):
    return sum(eta[m, m] * sp.diff(f, X[m], 2) for m in range(len(X)))


def random_jet(n1):
    d2 = [[None] * n1 for _ in range(n1)]
    for m in range(n1):
        for k in range(m, n1):
            d2[m][k] = d2[k][m] = rat()
    return rat(), [rat() for _ in range(n1)], d2


def fg_case(n):
    X = coords(n)
    eta = metric(n)
    n1 = n + 1
    tv, td1, td2 = random_jet(n1)
    pv, pd1, pd2 = random_jet(n1)
    a, b = sp.symbols("a b")
    td2s = [row[:] for row in td2]
    pd2s = [row[:] for row in pd2]
    td2s[0][0] = a
    pd2s[0][0] = b
    th = quad(X, tv, td1, td2s)
    ph = quad(X, pv, pd1, pd2s)
    H = raise2(q_low(th, ph, X), eta)
    F = (-sp.Rational(1, 2) * sp.sin(2 * th) * q0(ph, ph, X, eta)
         - sp.Rational(1, 4) * sp.sin(2 * th) * contract(q_low(th, ph, X), H)
         - sp.Rational(1, 2) * sp.cos(th) ** 2 * nested(ph, H, X))
    G = (sp.sin(th) ** 2 * box(ph, X, eta) + sp.sin(2 * th) * q0(th, ph, X, eta)
         + sp.Rational(1, 2) * sp.cos(th) ** 2 * nested(th, H, X))
    at0 = {x: 0 for x in X}
    F0 = F.subs(at0)
    G0 = G.subs(at0)
    vals = {a: td2[0][0], b: pd2[0][0]}
    jac = [[sp.diff(F0, a), sp.diff(F0, b)], [sp.diff(G0, a), sp.diff(G0, b)]]
    num = lambda e: float(sp.N(e.subs(vals), DIGITS))
    return {
        "dim": n,
        "theta": {"value": float(tv), "d1": [float(v) for v in td1], "d2": [[float(v) for v in r] for r in td2]},
        "phi": {"value": float(pv), "d1": [float(v) for v in pd1], "d2": [[float(v) for v in r] for r in pd2]},
        "F": num(F0),
        "G": num(G0),
        "jacobian": [[num(e) for e in row] for row in jac],
    }


def density_case(n):
    X = coords(n)
    eta = metric(n)
    n1 = n + 1
    lin = lambda: (rat(), [rat() for _ in range(n1)])
    (u0, du), (t0, dt) = lin(), lin()
    dv, dgu, dgv = [[rat() for _ in range(n1)] for _ in range(3)]
    L = lambda v, d: v + sum(d[m] * X[m] for m in range(n1))
    u, Th = L(u0, du), L(t0, dt)
    v, Gu, Gv = L(0, dv), L(0, dgu), L(0, dgv)
    U = u + Th
    c2 = sp.cos(u0 + t0) ** 2
    s2 = sp.sin(u0 + t0) ** 2

    def Qup(f, g):
        return raise2(q_low(f, g, X), eta)

    def mu0(a, f, g):
        da = grad(a, X)
        Q = Qup(f, g)
        return sum(da[m] * Q[m][0] for m in range(n1))

    def QQ(a, b, c, d):
        return contract(q_low(a, b, X), Qup(c, d))

    dt_ = lambda f: sp.diff(f, X[0])
    Dsq = lambda f: sum(g ** 2 for g in grad(f, X))
    e0t = (sp.Rational(1, 2) * s2 * Dsq(Gv) + c2 * dt_(Gv) * mu0(Th, Th, Gv)
           - sp.Rational(1, 4) * c2 * QQ(Th, Gv, Th, Gv))

    def e1(second):
        return (-c2 * dt_(Gu) * (mu0(v, Gu, v) + mu0(v, U, Gv))
                + c2 * dt_(Gv) * (mu0(U, Gu, v) + mu0(U, second, Gv))
                + c2 * dt_(Gv) * mu0(u, Th, Gv)
                + sp.Rational(1, 4) * c2 * QQ(v, Gu, Gu, v) + sp.Rational(1, 2) * c2 * QQ(v, Gu, U, Gv)
                - sp.Rational(1, 4) * c2 * QQ(u + 2 * Th, Gv, u, Gv))

    at0 = {x: 0 for x in X}
    num = lambda e: float(sp.N(sp.sympify(e).subs(at0), DIGITS))
    fl = lambda d: [float(x) for x in d]
    return {
        "dim": n,
        "u": float(u0), "theta": float(t0),
        "du": fl(du), "dtheta": fl(dt), "dv": fl(dv), "dgu": fl(dgu), "dgv": fl(dgv),
        "e_tilde0": num(e0t),
        "e1_three": num(e1(U)),
        "e1_two": num(e1(u)),
    }


out = {
    "fg": [fg_case(n) for n in (2, 3) for _ in range(50)],
    "density": [density_case(n) for n in (2, 3) for _ in range(8)],
}
with open("oracles.json", "w") as fh:
    json.dump(out, fh, indent=1)
