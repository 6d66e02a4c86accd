"""Shared plumbing for the experiment scripts."""
import argparse
import time
from pathlib import Path

from grasstique.baselines import hooi
from grasstique.optim import SOLVERS, SolverOptions


def parser(doc: str, outdir: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=doc)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--outdir", default=f"results/{outdir}")
    p.add_argument("--tol", type=float, default=1e-13)
    p.add_argument("--max-iters", type=int, default=5000)
    return p


def run_all(obj, start, runs, outdir, tol, max_iters):
    """``runs`` maps a label to ``(solver name, extra SolverOptions kwargs)``; solver "hooi" is the baseline."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, (solver, extra) in runs.items():
        path = str(out / f"{label}.csv")
        t0 = time.perf_counter()
        if solver == "hooi":
            res = hooi(obj, start, tol=tol, max_sweeps=max_iters, trace_path=path)
        else:
            res = SOLVERS[solver](obj, start, SolverOptions(tol=tol, max_iters=max_iters, trace_path=path, **extra))
        rows.append((label, res, time.perf_counter() - t0))
    print(f"{'run':<22}{'status':<11}{'iters':>7}{'to 1e-10':>10}{'relgrad':>11}{'seconds':>9}  phi")
    for label, res, dt in rows:
        b = res.trace.first_below(1e-10)
        print(f"{label:<22}{res.status:<11}{res.iterations:>7}{str(b):>10}{res.relgrad:>11.2e}{dt:>9.2f}  {res.phi:.15g}")
    print(f"traces in {out}/")
    return rows
