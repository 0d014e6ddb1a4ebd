"""Command-line entry point: ``bagplan <abstract|solve|refine|validate|family|pipeline>``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .abstraction import (AbstractionResult, InitViolationError, NotProperError,
                          RefinementMapping, abstract, subtype_members)
from .bags import bags_report
from .bqnp import BqnpProblem, Policy
from .mutex import InvariantError, invariant_from_json, mutex_report
from .pddl import PDDLError, dump_problem, ground, parse_domain, parse_problem
from .refinement import (FamilyError, FamilySpec, GuardedProgram, SoundnessError,
                          abstract_qstate, execute, explore, format_plan, generate_family,
                          parse_plan, refine, validate)
from .solver import Outcome, solve

log = logging.getLogger("bagplan")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NOT_PROPER = 3
EXIT_INVARIANT = 4
EXIT_UNSOLVABLE = 5
EXIT_UNKNOWN = 6
EXIT_BUDGET = 7
EXIT_INVALID = 8

OUTCOME_EXIT = {
    Outcome.SOLVED: EXIT_OK,
    Outcome.UNSOLVABLE: EXIT_UNSOLVABLE,
    Outcome.UNKNOWN: EXIT_UNKNOWN,
    Outcome.TIMEOUT: EXIT_BUDGET,
    Outcome.MEMOUT: EXIT_BUDGET,
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# manifest

def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class RunManifest:
    """Inputs, outputs and per-stage timings of a run directory.

    Stored as ``manifest.json``; later stages run on the same directory are
    merged into the existing file.
    """

    FILE = "manifest.json"

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        path = self.out_dir / self.FILE
        if path.exists():
            self.data = json.loads(path.read_text())
        else:
            self.data = {"tool": "bagplan", "version": __version__, "inputs": {}, "stages": {}}

    def add_input(self, path: Path) -> None:
        self.data["inputs"][str(path)] = sha256(path)

    def write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        return path

    def stage(self, name: str, seconds: float, outputs, verdict: str, **extra) -> None:
        entry = {
            "seconds": round(max(seconds, 0.0), 3),
            "verdict": verdict,
            "outputs": {str(p.relative_to(self.out_dir)): sha256(p) for p in outputs},
        }
        entry.update(extra)
        self.data["stages"][name] = entry

    def save(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / self.FILE
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return path


# --------------------------------------------------------------------------
# stage helpers

def read_task(domain: Path, problem: Path):
    try:
        return parse_problem(Path(problem).read_text(), parse_domain(Path(domain).read_text()))
    except OSError as e:
        raise CliError(EXIT_PARSE, f"cannot read input: {e}") from None
    except PDDLError as e:
        raise CliError(EXIT_PARSE, f"parse error: {e}") from None


def read_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(EXIT_PARSE, f"cannot read {path}: {e}") from None


def read_mutex(task, path):
    if path is None:
        return None
    try:
        return invariant_from_json(task.domain, read_json(path))
    except (ValueError, TypeError, AttributeError) as e:
        raise CliError(EXIT_PARSE, f"bad mutex file {path}: {e}") from None


def run_abstract(task, force: bool = False, prune: bool = True, mutex=None) -> AbstractionResult:
    try:
        return abstract(task, force=force, prune=prune, mutex=mutex)
    except NotProperError as e:
        raise CliError(EXIT_NOT_PROPER, f"not proper: {e} (use --force to abstract anyway)") from None
    except (InvariantError, InitViolationError) as e:
        raise CliError(EXIT_INVARIANT, f"invariant failure: {e}") from None


STAT_HEADER = ("instance", "|O_B|/|O_NB|", "atoms", "facts", "actions", "#sts",
               "|V_N|", "|V_B|", "|Ops|", "time(s)")


def stat_row(name: str, stats: dict) -> tuple[str, ...]:
    return (name, f"{stats['baggable_objects']}/{stats['other_objects']}",
            str(stats["ground_atoms"]), str(stats["facts"]), str(stats["ground_actions"]),
            str(stats["subtypes"]), str(stats["numeric"]), str(stats["boolean"]),
            str(stats["ops"]), f"{stats['seconds']:.4f}")


def format_table(header, rows) -> str:
    rows = [tuple(map(str, r)) for r in rows]
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(x.ljust(w) for x, w in zip(r, widths)).rstrip() for r in (header, *rows)]
    return "\n".join(lines)


def parse_family(text: str) -> dict[str, int]:
    """``"st1=6,st2=6"`` -> ``{"st1": 6, "st2": 6}``."""
    sizes = {}
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep or not value.isdigit():
            raise CliError(EXIT_PARSE, f"bad family entry {part!r}; expected st=N")
        sizes[key] = int(value)
    return sizes


def family_specs(args) -> list[dict[str, int]]:
    specs = [parse_family(s) for s in args.family or ()]
    if getattr(args, "family_file", None):
        try:
            lines = Path(args.family_file).read_text().splitlines()
        except OSError as e:
            raise CliError(EXIT_PARSE, f"cannot read family file: {e}") from None
        specs += [parse_family(ln.split("#", 1)[0]) for ln in lines if ln.split("#", 1)[0].strip()]
    return specs


def make_members(task, res: AbstractionResult, specs):
    members = []
    for sizes in specs:
        try:
            members.append(generate_family(FamilySpec(task, sizes), res.mapping.subtypes))
        except FamilyError as e:
            raise CliError(EXIT_PARSE, f"family constraint error: {e}") from None
    return members


def run_member(program: GuardedProgram, task, chooser: str, seed: int | None,
               step_limit: int, explore_limit: int) -> dict:
    """Execute the program on one family member and validate the plan."""
    t0 = time.perf_counter()
    gtask = ground(task)
    row = {"member": task.name,
           "sizes": {k: len(v) for k, v in
                     sorted(subtype_members(program.mapping.subtypes, task).items())}}
    try:
        ex = execute(program, gtask, chooser=chooser, seed=seed, step_limit=step_limit)
    except SoundnessError as e:
        row.update(verdict="unsound", plan_length=None, valid=False, detail=str(e))
        return row
    val = validate(ex.plan, gtask) if ex.reached_goal else None
    row.update(verdict=ex.verdict, plan_length=len(ex.plan),
               valid=bool(val), detail=ex.detail if not val else "", plan=format_plan(ex.plan))
    if explore_limit:
        exp = explore(program, gtask, max_states=explore_limit)
        row["all_branches"] = exp.all_branches_reach_goal if exp.complete else None
    row["seconds"] = round(time.perf_counter() - t0, 3)
    return row


# --------------------------------------------------------------------------
# subcommands

def _emit_abstraction(man: RunManifest, task, res: AbstractionResult, args) -> list[Path]:
    outs = [man.write("problem.bqnp.json", res.problem.dumps()),
            man.write("mapping.json", res.mapping.dumps())]
    if args.emit_mutex:
        rep = mutex_report(task, res.bags.mutex)
        outs.append(man.write("mutex.json", json.dumps(rep, indent=2, sort_keys=True) + "\n"))
    if args.emit_bags:
        outs.append(man.write("bags.json",
                              json.dumps(bags_report(res.bags), indent=2, sort_keys=True) + "\n"))
    if args.emit_qnp:
        outs.append(man.write("problem.qnp", res.problem.to_qnp(task.name)))
    return outs


def cmd_abstract(args) -> int:
    task = read_task(args.domain, args.problem)
    man = RunManifest(args.out)
    man.add_input(args.domain)
    man.add_input(args.problem)
    res = run_abstract(task, force=args.force, prune=not args.no_prune,
                       mutex=read_mutex(task, args.mutex))
    outs = _emit_abstraction(man, task, res, args)
    stats = {k: v for k, v in res.stats.items() if k != "seconds"}
    man.stage("abstract", res.seconds, outs, "ok" if res.bags.proper else "forced", stats=stats)
    man.save()
    print(format_table(STAT_HEADER, [stat_row(task.name, res.stats)]))
    return EXIT_OK


def _write_solution(man: RunManifest, problem: BqnpProblem, result) -> list[Path]:
    outs = []
    if result.solved:
        outs.append(man.write("policy.json", result.policy.dumps(problem)))
        outs.append(man.write("certificate.json", result.verdict.dumps(result.graph)))
    return outs


def cmd_solve(args) -> int:
    try:
        problem = BqnpProblem.from_json(read_json(args.problem))
    except (KeyError, ValueError, TypeError) as e:
        raise CliError(EXIT_PARSE, f"malformed problem file: {e}") from None
    man = RunManifest(args.out)
    man.add_input(args.problem)
    result = solve(problem, max_nodes=args.max_nodes, max_seconds=args.max_seconds)
    outs = _write_solution(man, problem, result)
    man.stage("solve", result.seconds, outs, result.outcome.value,
              nodes=result.nodes, reason=result.reason)
    man.save()
    print(f"{result.outcome.value} nodes={result.nodes} time={result.seconds:.4f}s"
          + (f" ({result.reason})" if result.reason else ""))
    return OUTCOME_EXIT[result.outcome]


def load_run(run_dir: Path):
    run_dir = Path(run_dir)
    try:
        problem = BqnpProblem.from_json(read_json(run_dir / "problem.bqnp.json"))
        mapping = RefinementMapping.from_json(read_json(run_dir / "mapping.json"))
        policy = Policy.from_json(read_json(run_dir / "policy.json"), problem)
    except (KeyError, ValueError, TypeError) as e:
        raise CliError(EXIT_PARSE, f"malformed run directory {run_dir}: {e}") from None
    return problem, mapping, policy


def cmd_refine(args) -> int:
    problem, mapping, policy = load_run(args.run)
    t0 = time.perf_counter()
    program = refine(policy, problem, mapping)
    man = RunManifest(args.run)
    outs = [man.write("program.json", program.dumps()),
            man.write("program.txt", "\n".join(program.describe()) + "\n")]
    man.stage("refine", time.perf_counter() - t0, outs, "ok", rules=len(program.rules))
    man.save()
    print("\n".join(program.describe()))
    return EXIT_OK


def cmd_validate(args) -> int:
    task = read_task(args.domain, args.problem)
    gtask = ground(task)
    try:
        plan = parse_plan(Path(args.plan).read_text(), gtask)
    except OSError as e:
        raise CliError(EXIT_PARSE, f"cannot read plan: {e}") from None
    except ValueError as e:
        raise CliError(EXIT_PARSE, f"plan parse error: {e}") from None
    res = validate(plan, gtask)
    print(f"valid ({res.steps} steps)" if res.valid else f"invalid: {res.reason}")
    return EXIT_OK if res.valid else EXIT_INVALID


def cmd_family(args) -> int:
    task = read_task(args.domain, args.problem)
    res = run_abstract(task, force=args.force)
    specs = family_specs(args)
    if not specs:
        raise CliError(EXIT_PARSE, "no family given (use --family or --family-file)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for member in make_members(task, res, specs):
        path = out / f"{member.name}.pddl"
        path.write_text(dump_problem(member))
        print(path)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    """abstract -> solve -> refine -> family -> execute and validate every member."""
    task = read_task(args.domain, args.problem)
    man = RunManifest(args.out)
    man.add_input(args.domain)
    man.add_input(args.problem)
    res = run_abstract(task, force=args.force, mutex=read_mutex(task, args.mutex))
    outs = _emit_abstraction(man, task, res, args)
    man.stage("abstract", res.seconds, outs, "ok" if res.bags.proper else "forced",
              stats={k: v for k, v in res.stats.items() if k != "seconds"})
    print(format_table(STAT_HEADER, [stat_row(task.name, res.stats)]))

    members = [task] + make_members(task, res, family_specs(args))
    roots = list(dict.fromkeys(abstract_qstate(res.mapping, m) for m in members))
    result = solve(res.problem, max_nodes=args.max_nodes, max_seconds=args.max_seconds,
                   roots=roots)
    outs = _write_solution(man, res.problem, result)
    man.stage("solve", result.seconds, outs, result.outcome.value, nodes=result.nodes,
              reason=result.reason, roots=len(roots))
    print(f"solve: {result.outcome.value} nodes={result.nodes} time={result.seconds:.4f}s")
    if not result.solved:
        man.save()
        return OUTCOME_EXIT[result.outcome]

    t0 = time.perf_counter()
    program = refine(result.policy, res.problem, res.mapping)
    outs = [man.write("program.json", program.dumps()),
            man.write("program.txt", "\n".join(program.describe()) + "\n")]
    man.stage("refine", time.perf_counter() - t0, outs, "ok", rules=len(program.rules))

    chooser = "first" if args.seed is None else "random"
    t0 = time.perf_counter()
    jobs = [(program, m, chooser, args.seed, args.step_limit, args.explore) for m in members]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run_member, *zip(*jobs)))
    else:
        rows = [run_member(*j) for j in jobs]
    outs = []
    for row in rows:
        plan = row.pop("plan", None)
        if plan is not None:
            outs.append(man.write(f"plans/{row['member']}.plan", plan))
    summary = [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
    outs.append(man.write("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n"))
    ok = all(r["valid"] and r.get("all_branches") is not False for r in rows)
    man.stage("validate", time.perf_counter() - t0, outs, "ok" if ok else "failed",
              members=len(rows))
    man.save()

    header = ("member", "bag sizes", "plan length", "verdict")
    table = [(r["member"], " ".join(f"{k}={v}" for k, v in r["sizes"].items()),
              "-" if r["plan_length"] is None else r["plan_length"],
              ("valid" if r["valid"] else r["verdict"])
              + ("" if r.get("all_branches") is None else
                 (" all-branches" if r["all_branches"] else " branch-fails")))
             for r in rows]
    print(format_table(header, table))
    return EXIT_OK if ok else EXIT_INVALID


# --------------------------------------------------------------------------
# argument parsing

def _add_abstract_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--force", action="store_true", help="abstract even if the domain is not proper")
    p.add_argument("--emit-mutex", action="store_true", help="write mutex.json")
    p.add_argument("--emit-bags", action="store_true", help="write bags.json")
    p.add_argument("--emit-qnp", action="store_true", help="write problem.qnp (flat text)")
    p.add_argument("--mutex", type=Path, metavar="FILE",
                   help='candidate mutex groups as JSON, e.g. {"ball": [["at", "carry"]]}')


def _add_budget_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-nodes", type=int, default=100_000)
    p.add_argument("--max-seconds", type=float, default=60.0)


def _add_family_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", action="append", metavar="st1=N,st2=M",
                   help="subtype sizes of one family member (repeatable)")
    p.add_argument("--family-file", help="file with one st=N,... line per member")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bagplan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("abstract", help="build the BQNP abstraction of a PDDL instance")
    p.add_argument("domain", type=Path)
    p.add_argument("problem", type=Path)
    p.add_argument("-o", "--out", type=Path, default=Path("out"))
    p.add_argument("--no-prune", action="store_true", help="keep fact-dependent variables")
    _add_abstract_flags(p)
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("solve", help="search a terminating policy for a problem.bqnp.json")
    p.add_argument("problem", type=Path)
    p.add_argument("-o", "--out", type=Path, default=Path("out"))
    _add_budget_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("refine", help="turn the policy of a run directory into a guarded program")
    p.add_argument("run", type=Path, help="directory with problem.bqnp.json, mapping.json, policy.json")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("validate", help="replay a plan file on a PDDL instance")
    p.add_argument("domain", type=Path)
    p.add_argument("problem", type=Path)
    p.add_argument("plan", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("family", help="write resized copies of a PDDL problem")
    p.add_argument("domain", type=Path)
    p.add_argument("problem", type=Path)
    p.add_argument("-o", "--out", type=Path, default=Path("family"))
    p.add_argument("--force", action="store_true")
    _add_family_flags(p)
    p.set_defaults(func=cmd_family)

    p = sub.add_parser("pipeline", help="abstract, solve, refine and validate on a family")
    p.add_argument("domain", type=Path)
    p.add_argument("problem", type=Path)
    p.add_argument("-o", "--out", type=Path, default=Path("out"))
    _add_abstract_flags(p)
    _add_budget_flags(p)
    _add_family_flags(p)
    p.add_argument("--seed", type=int, help="choose tuples at random with this seed")
    p.add_argument("--jobs", type=int, default=1, help="validate members in parallel")
    p.add_argument("--step-limit", type=int, default=100_000)
    p.add_argument("--explore", type=int, default=0, metavar="MAX_STATES",
                   help="also check every tuple choice, up to this many states per member")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("BAGPLAN_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"bagplan: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
