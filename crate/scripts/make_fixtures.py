"""Write MATPOWER-format fixtures and reference AC power-flow voltages.

Uses PYPOWER (an independent Python port of MATPOWER) as the reference
solver. Reactive limits are not enforced and dispatch is fixed at Pg, so the
reference solves the same problem as the Rust solver.

    pip install pypower
    python3 scripts/make_fixtures.py crates/core/fixtures
"""
import sys
from pathlib import Path

from pypower.api import case14, case118, ppoption, runpf


def fmt(x):
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def write_matrix(out, name, rows, ncols, header):
    out.append(f"%% {name} data")
    out.append(f"%\t{header}")
    out.append(f"mpc.{name} = [")
    for row in rows:
        out.append("\t" + "\t".join(fmt(v) for v in row[:ncols]) + ";")
    out.append("];")
    out.append("")


def write_case(name, ppc, path):
    out = [f"function mpc = {name}", f"%{name.upper()}    Power flow data.", "",
           "%% MATPOWER Case Format : Version 2", "mpc.version = '2';", "",
           "%%-----  Power Flow Data  -----%%", "%% system MVA base",
           f"mpc.baseMVA = {fmt(ppc['baseMVA'])};", ""]
    write_matrix(out, "bus", ppc["bus"], 13,
                 "bus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin")
    write_matrix(out, "gen", ppc["gen"], 21,
                 "bus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tPc1\tPc2\tQc1min\tQc1max\tQc2min\tQc2max\tramp_agc\tramp_10\tramp_30\tramp_q\tapf")
    write_matrix(out, "branch", ppc["branch"], 13,
                 "fbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax")
    out.append("%%-----  OPF Data  -----%%")
    write_matrix(out, "gencost", ppc["gencost"], ppc["gencost"].shape[1],
                 "2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0")
    Path(path).write_text("\n".join(out))


def main(outdir):
    outdir = Path(outdir)
    opt = ppoption(VERBOSE=0, OUT_ALL=0, PF_TOL=1e-10, ENFORCE_Q_LIMS=0)
    for name, fn in (("case14", case14), ("case118", case118)):
        ppc = fn()
        write_case(name, ppc, outdir / f"{name}.m")
        res, ok = runpf(fn(), opt)
        assert ok, name
        lines = ["bus,v_mag,v_ang_deg"]
        for row in res["bus"]:
            lines.append(f"{int(row[0])},{repr(float(row[7]))},{repr(float(row[8]))}")
        (outdir / f"{name}_reference.csv").write_text("\n".join(lines) + "\n")
        print(name, "total gen", res["gen"][:, 1].sum(), "load", res["bus"][:, 2].sum())


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else ".")
