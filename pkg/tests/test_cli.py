import json

import pytest

from bagplan import corpus
from bagplan.cli import main, parse_family, CliError

DOMAIN = corpus.corpus_path("gripper-sim-domain")
PROBLEM = corpus.corpus_path("gripper-sim-prob1-1")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _manifest_ok(out_dir):
    man = json.loads((out_dir / "manifest.json").read_text())
    for stage in man["stages"].values():
        assert stage["seconds"] >= 0
        for rel in stage["outputs"]:
            path = out_dir / rel
            assert path.exists()
            if path.suffix == ".json":
                json.loads(path.read_text())
    return man


def test_abstract_stat_row(tmp_path, capsys):
    code, out, _ = run(capsys, "abstract", DOMAIN, PROBLEM, "-o", tmp_path, "--emit-mutex",
                       "--emit-bags", "--emit-qnp")
    assert code == 0
    row = out.splitlines()[1].split()
    # instance, objects, atoms, facts, actions, #sts, |V_N|, |V_B|, |Ops|, time
    assert row[5:9] == ["2", "4", "2", "6"]
    assert row[4] == "44"
    man = _manifest_ok(tmp_path)
    assert set(man["stages"]["abstract"]["outputs"]) == {
        "problem.bqnp.json", "mapping.json", "mutex.json", "bags.json", "problem.qnp"}


def test_malformed_pddl(tmp_path, capsys):
    bad = tmp_path / "bad.pddl"
    bad.write_text("(define (problem p) (:domain gripper-sim) (:objects")
    code, _, err = run(capsys, "abstract", DOMAIN, bad, "-o", tmp_path / "o")
    assert code == 2 and "parse error" in err


def test_not_proper_and_force(tmp_path, capsys):
    text = corpus.domain_text("example1").rstrip()[:-1] + """
  (:action zap
    :parameters (?b - ball ?g - gripper)
    :precondition (and (white ?b) (he ?g))
    :effect (and (black ?b) (le ?g) (not (white ?b)) (not (he ?g)))))"""
    dom = tmp_path / "zap.pddl"
    dom.write_text(text)
    prob = corpus.corpus_path("example1")
    code, _, err = run(capsys, "abstract", dom, prob, "-o", tmp_path / "a")
    assert code == 3 and "not proper" in err
    code, _, _ = run(capsys, "abstract", dom, prob, "-o", tmp_path / "b", "--force")
    assert code == 0


def test_invariant_failure(tmp_path, capsys):
    groups = tmp_path / "groups.json"
    groups.write_text(json.dumps({"ball": [["at"]]}))
    code, _, err = run(capsys, "abstract", DOMAIN, PROBLEM, "-o", tmp_path, "--mutex", groups)
    assert code == 4 and "invariant" in err


def test_user_groups_accepted(tmp_path, capsys):
    groups = tmp_path / "groups.json"
    groups.write_text(json.dumps({"ball": [["at", "carry"]], "gripper": [["carry", "free"]]}))
    code, out, _ = run(capsys, "abstract", DOMAIN, PROBLEM, "-o", tmp_path, "--mutex", groups)
    assert code == 0 and out.splitlines()[1].split()[5:9] == ["2", "4", "2", "6"]


def test_solve_and_refine(tmp_path, capsys):
    assert run(capsys, "abstract", DOMAIN, PROBLEM, "-o", tmp_path)[0] == 0
    code, out, _ = run(capsys, "solve", tmp_path / "problem.bqnp.json", "-o", tmp_path)
    assert code == 0 and out.startswith("solved")
    assert (tmp_path / "policy.json").exists() and (tmp_path / "certificate.json").exists()
    code, out, _ = run(capsys, "refine", tmp_path)
    assert code == 0 and "(pick ?ball ?gripper" in out
    man = _manifest_ok(tmp_path)
    assert set(man["stages"]) == {"abstract", "solve", "refine"}


def test_solve_loop_problem(tmp_path, capsys):
    path = tmp_path / "loop.json"
    path.write_text(corpus.loop_problem().dumps())
    code, _, _ = run(capsys, "solve", path, "-o", tmp_path)
    assert code == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["verdict"] == "Terminating" and not cert["sieve_terminating"]


def test_solve_inconsistent_goal(tmp_path, capsys):
    data = corpus.loop_problem().to_json()
    data["goal"] = [{"var": "X", "rel": "=0"}, {"var": "X", "rel": ">0"}]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    code, out, _ = run(capsys, "solve", path, "-o", tmp_path)
    assert code == 5 and out.startswith("unsolvable")


def test_solve_budget(tmp_path, capsys):
    assert run(capsys, "abstract", corpus.corpus_path("gripper-hl-domain"),
               corpus.corpus_path("gripper-hl-prob1-1"), "-o", tmp_path)[0] == 0
    code, _, _ = run(capsys, "solve", tmp_path / "problem.bqnp.json", "-o", tmp_path,
                     "--max-nodes", "3")
    assert code == 7


def test_solve_malformed_json(tmp_path, capsys):
    path = tmp_path / "p.json"
    path.write_text("{")
    assert run(capsys, "solve", path, "-o", tmp_path)[0] == 2


def test_validate_command(tmp_path, capsys):
    run(capsys, "pipeline", DOMAIN, PROBLEM, "-o", tmp_path)
    plan = tmp_path / "plans" / "prob1-1.plan"
    code, out, _ = run(capsys, "validate", DOMAIN, PROBLEM, plan)
    assert code == 0 and out.startswith("valid")
    lines = plan.read_text().splitlines()
    broken = tmp_path / "broken.plan"
    broken.write_text("\n".join(lines[1:]) + "\n")
    code, out, _ = run(capsys, "validate", DOMAIN, PROBLEM, broken)
    assert code == 8 and out.startswith("invalid")


def test_family_command(tmp_path, capsys):
    code, out, _ = run(capsys, "family", DOMAIN, PROBLEM, "-o", tmp_path,
                       "--family", "st2=3", "--family", "st1=1,st2=8")
    assert code == 0
    files = sorted(p.name for p in tmp_path.glob("*.pddl"))
    assert files == ["prob1-1-st11-st28.pddl", "prob1-1-st23.pddl"]


def test_family_constraint_error(tmp_path, capsys):
    code, _, err = run(capsys, "family", DOMAIN, PROBLEM, "-o", tmp_path, "--family", "st7=2")
    assert code == 2 and "constraint" in err


def test_pipeline_gripper_sweep(tmp_path, capsys):
    fam = tmp_path / "family.txt"
    fam.write_text("# balls x grippers\n" + "".join(
        f"st1={g},st2={b}\n" for b in (2, 4, 8, 20) for g in (1, 2)))
    code, out, _ = run(capsys, "pipeline", DOMAIN, PROBLEM, "-o", tmp_path / "run",
                       "--family-file", fam, "--jobs", "2")
    assert code == 0
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert len(summary) == 9 and all(r["valid"] for r in summary)
    _manifest_ok(tmp_path / "run")


def test_pipeline_tyreworld(tmp_path, capsys):
    code, out, _ = run(capsys, "pipeline", corpus.corpus_path("tyreworld-domain"),
                       corpus.corpus_path("tyreworld-prob1-1"), "-o", tmp_path,
                       "--family", "st1=2", "--family", "st1=7", "--explore", "5000")
    assert code == 0
    assert out.splitlines()[1].split()[5:9] == ["1", "4", "0", "3"]


def test_pipeline_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(capsys, "pipeline", DOMAIN, PROBLEM, "-o", tmp_path / d,
                   "--family", "st2=3", "--seed", "5")[0] == 0
    for name in ("problem.bqnp.json", "mapping.json", "policy.json", "certificate.json",
                 "program.json", "summary.json", "plans/prob1-1-st23.plan"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def strip(man):
        for stage in man["stages"].values():
            stage.pop("seconds")
        man["inputs"] = sorted(man["inputs"].values())
        return man
    a, b = (strip(json.loads((tmp_path / d / "manifest.json").read_text())) for d in "ab")
    assert a == b


def test_parse_family():
    assert parse_family("st1=6, st2=6") == {"st1": 6, "st2": 6}
    with pytest.raises(CliError):
        parse_family("st1=x")
