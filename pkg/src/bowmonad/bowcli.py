"""Command line front end: JSON data files, generators, sweeps and CSV
emission.

Every command is a thin delegate to the library; results are identical to
direct calls on the same inputs.  Complex entries are serialized as
two-element [re, im] arrays on the f64 backend and as integer fraction
objects {"re": {"n", "d"}, "im": {"n", "d"}} on the exact backend; matrices
are row-major nested lists.  Exit codes: 0 success, 1 a validation or
comparison failed, 2 malformed input.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from . import caloron, diraclattice, monadcore, nahmbow, numkit as nk, taubnut
from .monadcore import Line, fiber, splitting_type
from .numkit import GQ, ToleranceContext


class ParseError(Exception):
    pass


# ---------------------------------------------------------------------------
# scalar / matrix serialization


def _num_to_json(z, exact: bool):
    if exact:
        return {"re": {"n": z.re.numerator, "d": z.re.denominator},
                "im": {"n": z.im.numerator, "d": z.im.denominator}}
    z = complex(z)
    return [z.real, z.imag]


def _num_from_json(obj, exact: bool):
    if exact:
        if not (isinstance(obj, dict) and "re" in obj and "im" in obj):
            raise ParseError(f"expected fraction pair, got {obj!r}")
        return GQ(Fraction(obj["re"]["n"], obj["re"]["d"]),
                  Fraction(obj["im"]["n"], obj["im"]["d"]))
    if not (isinstance(obj, list) and len(obj) == 2):
        raise ParseError(f"expected [re, im], got {obj!r}")
    return complex(obj[0], obj[1])


def matrix_to_json(M, exact: bool):
    return [[_num_to_json(M[i, j], exact) for j in range(M.shape[1])]
            for i in range(M.shape[0])]


def matrix_from_json(obj, shape, exact: bool):
    if not isinstance(obj, list) or len(obj) != shape[0] or any(
            not isinstance(r, list) or len(r) != shape[1] for r in obj):
        raise ParseError(f"matrix must be {shape[0]}x{shape[1]} row-major")
    if exact:
        return nk.exact_matrix([[_num_from_json(e, True) for e in row]
                                for row in obj])
    return np.array([[_num_from_json(e, False) for e in row] for row in obj],
                    dtype=complex)


def real_array_to_json(M):
    return np.asarray(M, dtype=float).tolist()


# ---------------------------------------------------------------------------
# data files


_MATRIX_FIELDS = {
    "caloron": lambda k, m: {"A": (k, k), "B": (k, k), "C": (k, 2),
                             "D2row": (1, k), "Aprime": (m, k),
                             "Bprime": (1, k), "Cprime": (m, 2)},
    "caloron-m0": lambda k, m: {"A": (k, k), "B0": (k, k), "C": (k, 2),
                                "D": (2, k)},
    "taubnut": lambda k, m: {"A": (k, k), "Bht": (k, k), "Bth": (k, k),
                             "C": (k, 2), "D2row": (1, k), "Aprime": (m, k),
                             "Bprime": (1, k), "Cprime": (m, 2)},
    "taubnut-m0": lambda k, m: {"A": (k, k), "Bht": (k, k), "Bth": (k, k),
                                "C": (k, 2), "D": (2, k)},
}
_DATA_CLS = {"caloron": caloron.CaloronData, "caloron-m0": caloron.CaloronDataM0,
             "taubnut": taubnut.TaubNutData, "taubnut-m0": taubnut.TaubNutDataM0}


def data_to_json(data) -> dict:
    exact = data.exact
    if isinstance(data, caloron.CaloronData):
        kind = "caloron"
    elif isinstance(data, caloron.CaloronDataM0):
        kind = "caloron-m0"
    elif isinstance(data, taubnut.TaubNutData):
        kind = "taubnut"
    elif isinstance(data, taubnut.TaubNutDataM0):
        kind = "taubnut-m0"
    else:
        raise TypeError(type(data))
    out = {"kind": kind, "backend": "exact" if exact else "f64",
           "k": data.k, "m": data.m}
    for name in _MATRIX_FIELDS[kind](data.k, data.m):
        out[name] = matrix_to_json(getattr(data, name), exact)
    return out


def data_from_json(obj) -> object:
    kind = obj.get("kind")
    if kind in ("bowrep", "nahmsolution"):
        return solution_from_json(obj)
    if kind not in _MATRIX_FIELDS:
        raise ParseError(f"unknown kind {kind!r}")
    backend = obj.get("backend", "f64")
    if backend not in ("f64", "exact"):
        raise ParseError(f"unknown backend {backend!r}")
    exact = backend == "exact"
    try:
        k = int(obj["k"])
        m = int(obj.get("m", 0))
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad size fields: {e}")
    fields = {}
    for name, shape in _MATRIX_FIELDS[kind](k, m).items():
        if name not in obj:
            raise ParseError(f"missing field {name!r}")
        fields[name] = matrix_from_json(obj[name], shape, exact)
    meta = {"k": k} if kind.endswith("-m0") else {"k": k, "m": m}
    try:
        return _DATA_CLS[kind](**meta, **fields)
    except ValueError as e:
        raise ParseError(str(e))


def solution_to_json(sol: nahmbow.NahmSolution) -> dict:
    def seg(s):
        return {"s0": s.s0, "s1": s.s1, "rank": s.rank,
                "constant": bool(s.constant),
                "s": real_array_to_json(s.s_grid),
                "T1": [matrix_to_json(T, False) for T in s.T1],
                "T2": [matrix_to_json(T, False) for T in s.T2],
                "T3": [matrix_to_json(T, False) for T in s.T3]}
    rep = sol.rep
    out = {"kind": "nahmsolution", "backend": "f64",
           "rep": {"ell": rep.ell, "lam": rep.lam, "k": rep.k, "m": rep.m},
           "head": seg(sol.head), "middle": seg(sol.middle),
           "tail": seg(sol.tail),
           "Bth": matrix_to_json(sol.Bth, False),
           "Bht": matrix_to_json(sol.Bht, False),
           "i_minus": matrix_to_json(sol.i_minus, False),
           "i_plus": matrix_to_json(sol.i_plus, False)}
    for name in ("I_minus", "J_minus", "I_plus", "J_plus"):
        v = getattr(sol, name)
        if v is not None:
            out[name] = matrix_to_json(np.atleast_2d(v), False)
    return out


def solution_from_json(obj) -> object:
    kind = obj.get("kind")
    if kind == "bowrep":
        try:
            return nahmbow.BowRepresentation(float(obj["ell"]), float(obj["lam"]),
                                             int(obj["k"]), int(obj["m"]))
        except (KeyError, ValueError) as e:
            raise ParseError(str(e))
    if kind != "nahmsolution":
        raise ParseError(f"unknown kind {kind!r}")
    try:
        r = obj["rep"]
        rep = nahmbow.BowRepresentation(float(r["ell"]), float(r["lam"]),
                                        int(r["k"]), int(r["m"]))

        def seg(o, rank):
            grid = np.asarray(o["s"], dtype=float)
            mk = lambda key: np.stack([matrix_from_json(T, (rank, rank), False)
                                       for T in o[key]])
            return nahmbow.Segment(float(o["s0"]), float(o["s1"]), rank, grid,
                                   mk("T1"), mk("T2"), mk("T3"),
                                   constant=bool(o.get("constant", False)))

        k, m = rep.k, rep.m
        sol = nahmbow.NahmSolution(
            rep, seg(obj["head"], k), seg(obj["middle"], k + m),
            seg(obj["tail"], k),
            matrix_from_json(obj["Bth"], (k, k), False),
            matrix_from_json(obj["Bht"], (k, k), False),
            i_minus=matrix_from_json(obj["i_minus"], (k + m, k), False),
            i_plus=matrix_from_json(obj["i_plus"], (k + m, k), False))
        for name, shape in (("I_minus", (k, 1)), ("J_minus", (1, k)),
                            ("I_plus", (k, 1)), ("J_plus", (1, k))):
            if name in obj:
                setattr(sol, name, matrix_from_json(obj[name], shape, False))
        return sol
    except (KeyError, TypeError) as e:
        raise ParseError(f"malformed solution file: {e}")


def load_file(path: str):
    try:
        with open(path) as f:
            obj = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read {path}: {e}")
    if not isinstance(obj, dict):
        raise ParseError("top level must be an object")
    return data_from_json(obj)


def _write_out(payload, out_path):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _write_csv(rows, header, out_path):
    f = open(out_path, "w", newline="") if out_path else sys.stdout
    try:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if out_path:
            f.close()


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BOWMONAD_THREADS", "1")))
    except ValueError:
        return 1


def _map_ordered(fn, items):
    n = _threads()
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _ctx(args) -> ToleranceContext:
    return ToleranceContext(rank_tol=args.tol) if args.tol else \
        ToleranceContext()


def _monad_for(data, ctx):
    if isinstance(data, (taubnut.TaubNutData, taubnut.TaubNutDataM0)):
        return taubnut.big_monad(data, ctx).to_float()
    return caloron.small_monad(data, ctx).to_float()


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    data = load_file(args.input)
    if isinstance(data, nahmbow.NahmSolution):
        report = nahmbow.check_boundary(data, _ctx(args))
    elif isinstance(data, (caloron.CaloronData, caloron.CaloronDataM0)):
        report = caloron.validate(data, _ctx(args))
    else:
        report = taubnut.validate(data, _ctx(args))
    _write_out(report.to_json(), args.out)
    print(report.render(), file=sys.stderr)
    return 0 if report.passed else 1


def cmd_fiber(args) -> int:
    data = load_file(args.input)
    ctx = _ctx(args)
    pm = _monad_for(data, ctx)
    rng = np.random.default_rng(args.seed)
    pts = monadcore.random_chart_points(args.points, rng)
    dims = _map_ordered(lambda p: fiber(pm.evaluate(p), ctx).dim, pts)
    payload = {"chart": pm.chart, "composite_residual": pm.composite_residual(),
               "points": [[p[0].real, p[0].imag, p[1].real, p[1].imag]
                          for p in pts],
               "dims": dims}
    _write_out(payload, args.out)
    return 0 if all(d == dims[0] for d in dims) else 1


def cmd_splitting(args) -> int:
    data = load_file(args.input)
    ctx = _ctx(args)
    pm = _monad_for(data, ctx)
    B0 = nk.to_float(data.B0 if hasattr(data, "B0") else data.B)
    spec = np.linalg.eigvals(B0)
    rng = np.random.default_rng(args.seed)
    rows = []
    for ev in sorted(spec, key=lambda z: (z.real, z.imag)):
        a, b = splitting_type(pm, Line("B_eta", complex(ev)), ctx)
        rows.append(["spectrum", ev.real, ev.imag, a, b])
    n_off = 0
    while n_off < args.points:
        z = complex(rng.standard_normal() * 2 + 1j * rng.standard_normal() * 2)
        if abs(z) < 0.1 or min(abs(z - e) for e in spec) < 0.2:
            continue
        a, b = splitting_type(pm, Line("B_eta", z), ctx)
        rows.append(["sample", z.real, z.imag, a, b])
        n_off += 1
    payload = {"splittings": [{"which": r[0], "eta": [r[1], r[2]],
                               "type": [r[3], r[4]]} for r in rows]}
    _write_out(payload, args.out)
    ok = all(r[3] >= 1 for r in rows if r[0] == "spectrum") and \
        all(r[3] == 0 for r in rows if r[0] == "sample")
    return 0 if ok else 1


def cmd_spectral(args) -> int:
    data = load_file(args.input)
    if not isinstance(data, nahmbow.NahmSolution):
        raise ParseError("spectral expects a nahmsolution file")
    curve = nahmbow.spectral_curve(data, which=args.which,
                                   zeta_samples=args.zeta_samples)
    rows = [[i, j, c.real, c.imag]
            for (i, j), c in sorted(curve.coeffs.items())]
    _write_csv(rows, ["eta_power", "zeta_power", "re", "im"], args.out)
    summary = {"rank": curve.rank, "grading_ok": curve.grading_ok(),
               "reality_residual": curve.reality_residual(),
               "s_drift": curve.s_drift}
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return 0 if curve.grading_ok() else 1


def cmd_nahm_flow(args) -> int:
    data = load_file(args.input)
    if not isinstance(data, nahmbow.NahmSolution):
        raise ParseError("nahm-flow expects a nahmsolution file")
    seg = data.middle
    t1, t2, t3 = seg.at(seg.s0)
    zetas = [0.0, 0.5, -1.0, 1j, 2.0]
    flowed = nahmbow.flow(t1, t2, t3, seg.s0, seg.s1, args.step,
                          zeta_checks=zetas)
    rows = []
    ref = [np.poly(nahmbow.lax(t1, t2, t3, z)) for z in zetas]
    for i, s in enumerate(flowed.s_grid):
        worst = max(np.max(np.abs(np.poly(nahmbow.lax(
            flowed.T1[i], flowed.T2[i], flowed.T3[i], z)) - c0))
            for z, c0 in zip(zetas, ref))
        rows.append([s, worst])
    _write_csv(rows, ["s", "charpoly_drift"], args.out)
    print(json.dumps({"drift": flowed.drift, "steps": len(flowed.s_grid)},
                     sort_keys=True), file=sys.stderr)
    return 0


def cmd_dirac(args) -> int:
    """Kernel statistics at sampled points; with --points 0 a refinement
    trace (grid, h, dim, gap, reality, min_eig) at one seeded point."""
    sol = load_file(args.input)
    if not isinstance(sol, nahmbow.NahmSolution):
        raise ParseError("dirac expects a nahmsolution file")
    ctx = _ctx(args)
    rng = np.random.default_rng(args.seed)
    if args.points == 0:
        xi = complex(rng.standard_normal() + 1j * rng.standard_normal())
        psi = complex(rng.standard_normal() + 1j * rng.standard_normal())
        grids = [max(8, args.grid // 4), max(8, args.grid // 2), args.grid]
        trace = diraclattice.refinement_study(sol, (xi, psi), grids, ctx)
        rows = [[t["grid"], t["h"], t["dim"], t["gap"], t["reality"],
                 t["min_eig"]] for t in trace]
        _write_csv(rows, ["grid", "h", "kernel_dim", "gap", "reality",
                          "min_eig"], args.out)
        print(json.dumps({"refinement": _json_safe(
            [{k: v for k, v in t.items() if k != "basis"} for t in trace])},
            sort_keys=True))
        return 0 if all(t["dim"] == 2 for t in trace) else 1
    results = []
    spectra = []
    for _ in range(args.points):
        xi = complex(rng.standard_normal() + 1j * rng.standard_normal())
        psi = complex(rng.standard_normal() + 1j * rng.standard_normal())
        dl = diraclattice.assemble(sol, (xi, psi), args.grid)
        dim, _, gap = diraclattice.kernel(dl, ctx)
        sv = np.linalg.svd(dl.matrix, compute_uv=False)
        spectra.append(sv[-8:][::-1])
        results.append({"xi": [xi.real, xi.imag], "psi": [psi.real, psi.imag],
                        "kernel_dim": dim, "gap": gap,
                        "min_eig": diraclattice.positivity(dl),
                        "reality": diraclattice.reality_residual(dl)})
    if args.out:
        rows = []
        for r, sv in zip(results, spectra):
            rows.append([r["xi"][0], r["xi"][1], r["psi"][0], r["psi"][1],
                         r["kernel_dim"], r["gap"], r["min_eig"],
                         r["reality"]] + [float(s) for s in sv])
        _write_csv(rows, ["xi_re", "xi_im", "psi_re", "psi_im", "kernel_dim",
                          "gap", "min_eig", "reality"] +
                   [f"sigma_{i}" for i in range(1, len(spectra[0]) + 1)],
                   args.out)
    payload = {"grid": args.grid, "results": _json_safe(results)}
    print(json.dumps(payload, sort_keys=True))
    return 0 if all(r["kernel_dim"] == 2 for r in results) else 1


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, float) and np.isinf(x):
        return "inf"
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def cmd_roundtrip(args) -> int:
    data = load_file(args.input)
    ctx = _ctx(args)
    if isinstance(data, (caloron.CaloronData, caloron.CaloronDataM0)):
        ncx = caloron.to_nahm_complex(data, ctx)
        back = caloron.from_nahm_complex(ncx)
        pairs = [("B", data.B if isinstance(data, caloron.CaloronData)
                  else data.B0,
                  back.B if isinstance(back, caloron.CaloronData) else back.B0)]
        if isinstance(data, caloron.CaloronData):
            pairs.append(("monodromy", data.monodromy, back.monodromy))
        else:
            pairs.append(("B1", data.B1, back.B1))
    elif isinstance(data, (taubnut.TaubNutData, taubnut.TaubNutDataM0)):
        bc = taubnut.to_bow_complex(data, ctx)
        back = taubnut.from_bow_complex(bc)
        pairs = [("B0", data.B0, back.B0), ("B1", data.B1, back.B1)]
        if isinstance(data, taubnut.TaubNutData):
            pairs.append(("monodromy", data.monodromy, back.monodromy))
        else:
            pairs.append(("A", data.A, back.A))
    else:
        raise ParseError("roundtrip expects matrix data")
    entries = []
    worst = 0.0
    for name, before, after in pairs:
        c0 = np.asarray(nk.charpoly(nk.to_float(before)))
        c1 = np.asarray(nk.charpoly(nk.to_float(after)))
        diff = float(np.max(np.abs(c0 - c1)))
        worst = max(worst, diff)
        entries.append({"invariant": f"charpoly({name})", "diff": diff})
    payload = {"checks": entries, "max_diff": worst}
    _write_out(payload, args.out)
    return 0 if worst < 1e-8 else 1


def cmd_generate(args) -> int:
    kind, strategy = args.kind, args.strategy
    seed = args.seed
    exact = args.backend == "exact"
    if strategy == "diagonal-nahm":
        rep = nahmbow.BowRepresentation(1.0, 0.25, args.k, 0)
        rng = np.random.default_rng(seed)
        # the first two centers are pinned so the k = 2 curve is the product
        # of the two reference lines; extra centers are drawn
        base = [(1.0, 0.0, 0.0), (0.0, 0.0, 1.0)]
        pts = (base + [tuple(v) for v in rng.standard_normal((args.k, 3))])[:args.k]
        seg = nahmbow.diagonal_solution(rep, pts)
        sol = nahmbow.NahmSolution(rep, seg, seg, seg,
                                   np.eye(args.k, dtype=complex),
                                   np.eye(args.k, dtype=complex))
        _write_out(solution_to_json(sol), args.out)
        return 0
    if kind in ("caloron", "caloron-m0"):
        m = 0 if kind.endswith("m0") else args.m
        data = caloron.generate_caloron(args.k, m, seed=seed, exact=exact)
    elif kind in ("taubnut", "taubnut-m0"):
        m = 0 if kind.endswith("m0") else args.m
        data = taubnut.generate_taubnut(args.k, m, seed=seed, exact=exact)
    elif kind == "bowsol":
        rep = nahmbow.BowRepresentation(1.0, 0.25, 1, args.m)
        rng = np.random.default_rng(seed)
        if args.m == 0:
            sol = nahmbow.solution_k1_m0(
                rep, Bth=complex(*rng.standard_normal(2)),
                Bht=complex(*rng.standard_normal(2)),
                j_minus=float(rng.uniform(0.5, 1.5)))
        elif args.m == 1:
            sol = nahmbow.solution_k1_m1(
                rep, mu1=rng.standard_normal(3), mu2=rng.standard_normal(3),
                weight=float(rng.uniform(0.25, 0.75)),
                axis_phase=float(rng.uniform(0.3, 2.8)))
        else:
            raise ParseError("bowsol generator supports m in {0, 1}")
        _write_out(solution_to_json(sol), args.out)
        return 0
    else:
        raise ParseError(f"unknown kind {kind!r}")
    if strategy == "perturbed":
        data = _perturb(data, seed)
    _write_out(data_to_json(data), args.out)
    return 0


def _perturb(data, seed):
    """Re-solve the constraints from a nearby draw; a distinct seed stream
    keeps the instance close to, but different from, the base draw."""
    if isinstance(data, (caloron.CaloronData, caloron.CaloronDataM0)):
        return caloron.generate_caloron(data.k, data.m, seed=seed + 10007,
                                        exact=data.exact)
    return taubnut.generate_taubnut(data.k, data.m, seed=seed + 10007,
                                    exact=data.exact)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bowmonad",
        description="monads, bow complexes, Nahm flows and Dirac kernels")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, points=False, grid=False, step=False, zeta=False):
        sp.add_argument("--input", required=False)
        sp.add_argument("--out", default=None)
        sp.add_argument("--backend", choices=["f64", "exact"], default="f64")
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)
        if points:
            sp.add_argument("--points", type=int, default=20)
        if grid:
            sp.add_argument("--grid", type=int, default=256)
        if step:
            sp.add_argument("--step", type=float, default=1e-3)
        if zeta:
            sp.add_argument("--zeta-samples", type=int, default=None,
                            dest="zeta_samples")

    sp = sub.add_parser("validate", help="check relations and genericity")
    common(sp)
    sp.set_defaults(fn=cmd_validate)
    sp = sub.add_parser("fiber", help="fiber dimensions at random points")
    common(sp, points=True)
    sp.set_defaults(fn=cmd_fiber)
    sp = sub.add_parser("splitting", help="splitting types along the ruling")
    common(sp, points=True)
    sp.set_defaults(fn=cmd_splitting)
    sp = sub.add_parser("spectral", help="spectral curve coefficients (CSV)")
    common(sp, zeta=True)
    sp.add_argument("--which", choices=["S0", "S1"], default="S0")
    sp.set_defaults(fn=cmd_spectral)
    sp = sub.add_parser("nahm-flow", help="flow the middle interval, drift CSV")
    common(sp, step=True)
    sp.set_defaults(fn=cmd_nahm_flow)
    sp = sub.add_parser("dirac", help="lattice kernel at sampled points")
    common(sp, points=True, grid=True)
    sp.set_defaults(fn=cmd_dirac)
    sp = sub.add_parser("roundtrip", help="matrix -> complex -> matrix invariants")
    common(sp)
    sp.set_defaults(fn=cmd_roundtrip)
    sp = sub.add_parser("generate", help="seeded instance generators")
    common(sp)
    sp.add_argument("--kind", required=True,
                    choices=["caloron", "caloron-m0", "taubnut", "taubnut-m0",
                             "bowsol"])
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--strategy", default="k1-closed-form",
                    choices=["k1-closed-form", "diagonal-nahm", "perturbed"])
    sp.set_defaults(fn=cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ParseError as e:
        print(json.dumps({"error": {"type": "parse", "message": str(e)}}),
              file=sys.stderr)
        return 2
    except (nahmbow.BuildRefused, nahmbow.NotInNormalForm, nk.GapTooSmall,
            nk.DegeneratePencil, nk.ImageNotContained,
            diraclattice.SingularPoint) as e:
        print(json.dumps({"error": {"type": type(e).__name__,
                                    "message": str(e)}}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
