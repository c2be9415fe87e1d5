"""``crestfield evaluate|solve|verify|sweep --problem FILE [--field SRC] [--out DIR] [--seed N]``.

Exit codes: 0 ok, 1 other error, 2 schema/grid mismatch, 3 degenerate energy,
4 infeasible, 5 stalled refinement (report still written), 6 inconsistent verdict.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import expr as ex
from .construct import solve
from .energy import sweep_values
from .errors import CrestfieldError, DegenerateEnergy, SchemaError, StalledProgress
from .grid import Field, finite_difference_jet
from .io import field_from_csv, field_to_csv, report_json, table_csv
from .problem import load_problem
from .supremand import H_field
from .verify import classify_theorem1

EXIT_INCONSISTENT = 6


class _Run:
    def __init__(self, args):
        self.args = args
        path = Path(args.problem)
        try:
            text = path.read_text()
        except OSError as err:
            raise SchemaError(f"cannot read problem file: {err.strerror}", str(path)) from None
        self.problem = load_problem(text)
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = args.seed if args.seed is not None else self.problem.solver.get("seed", 0)

    def write(self, name, text):
        (self.out / name).write_text(text)

    def write_report(self, name, command, body):
        prov = {"tool": "crestfield", "version": __version__, "problem_sha256": self.problem.sha256,
                "seed": self.seed, "command": command}
        self.write(name, report_json(body, prov))

    def field(self, source):
        pb = self.problem
        N = pb.phi.dims[1]
        if source == "phi":
            return pb.phi.sample(pb.grid), None
        if source == "solve":
            report = solve(pb.solve_request(self.seed))
            return report.field, report
        if source.startswith("expr:"):
            try:
                ast = ex.parse_expr(source[5:])
            except CrestfieldError as err:
                raise SchemaError(str(err), "--field") from None
            x = pb.grid.coordinates()
            env = {f"x{i + 1}": x[..., i] for i in range(pb.grid.dim)}
            try:
                vals = np.broadcast_to(np.asarray(ex.evaluate(ast, env), float), pb.grid.shape)
                return Field(pb.grid, vals), None
            except (KeyError, ValueError) as err:
                raise SchemaError(str(err), "--field") from None
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as err:
            raise SchemaError(f"cannot read field file: {err.strerror}", str(path)) from None
        return field_from_csv(text, pb.grid, N), None


def _jets(pb, fld):
    return finite_difference_jet(fld, pb.order)


def cmd_evaluate(run):
    pb = run.problem
    fld, _ = run.field(run.args.field or "phi")
    jf = _jets(pb, fld)
    absH = H_field(pb.spec, jf)
    report = sweep_values(absH, pb.p_list)
    report.argmax_x = jf.x.reshape(-1, pb.grid.dim)[report.argmax_node].tolist()
    body = {"command": "evaluate", "energy": report.to_dict()}
    run.write_report("evaluate.json", "evaluate", body)
    if report.e1_is_zero:
        raise DegenerateEnergy("E_1(u) = 0: the crest factor needs a field with E_1(u) != 0")
    run.write("energies.csv", table_csv(["p", "E_p", "crest"], report.rows()))
    return 0


def cmd_sweep(run):
    pb = run.problem
    fld, _ = run.field(run.args.field or "phi")
    absH = H_field(pb.spec, _jets(pb, fld))
    report = sweep_values(absH, pb.ladder)
    ep = report.ep
    monotone = all(b >= a * (1.0 - 1e-12) for a, b in zip(ep, ep[1:]))
    body = {"command": "sweep", "energy": report.to_dict(), "monotone": monotone}
    run.write_report("sweep.json", "sweep", body)
    if report.e1_is_zero:
        raise DegenerateEnergy("E_1(u) = 0: the crest factor needs a field with E_1(u) != 0")
    if not monotone:
        raise CrestfieldError("E_p column is not monotone in p")
    run.write("sweep.csv", table_csv(["p", "E_p", "crest"], report.rows()))
    return 0


def _classify(run, fld):
    pb = run.problem
    return classify_theorem1(fld, pb.spec, pb.verify_p, pb.tolerances(), pb.exclusion_policy(), pb.deltas)


def cmd_solve(run):
    pb = run.problem
    try:
        report = solve(pb.solve_request(run.seed))
    except StalledProgress as err:
        if err.report is not None:
            _write_solution(run, err.report, None)
        raise
    verification = None
    try:
        verification = _classify(run, report.field).to_dict()
    except CrestfieldError as err:
        verification = {"error": str(err)}
    _write_solution(run, report, verification)
    return 0


def _write_solution(run, report, verification):
    pb = run.problem
    absH = H_field(pb.spec, _jets(pb, report.field))
    run.write("field.csv", field_to_csv(report.field, absH))
    body = {"command": "solve", "solution": report.to_dict()}
    if verification is not None:
        body["verification"] = verification
    run.write_report("solve.json", "solve", body)


def cmd_verify(run):
    fld, _ = run.field(run.args.field or "solve")
    rep = _classify(run, fld)
    run.write_report("verify.json", "verify", {"command": "verify", "verification": rep.to_dict()})
    return 0 if rep.verdict_consistent else EXIT_INCONSISTENT


COMMANDS = {"evaluate": cmd_evaluate, "solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep}


def build_parser():
    ap = argparse.ArgumentParser(prog="crestfield", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--problem", required=True, help="problem JSON file")
    ap.add_argument("--field", help="field CSV, or 'phi', 'solve', 'expr:<expression in x1, x2>'")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, help="override solver.seed")
    ap.add_argument("--version", action="version", version=f"crestfield {__version__}")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run = _Run(args)
        return COMMANDS[args.command](run)
    except CrestfieldError as err:
        print(f"crestfield: error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
