import json

import pytest

from poolres.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, growth_report, loglog_fit, main, parse_int_list
from poolres.formula import parse_dimacs


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_ggt_deterministic(capsys):
    c1, a, _ = run(capsys, "gen", "ggt", "--n", "6", "--seed", "1")
    c2, b, _ = run(capsys, "gen", "ggt", "--n", "6", "--seed", "1")
    assert c1 == c2 == EXIT_OK and a == b
    f = parse_dimacs(a)
    assert len(f) == 6 + 4 * 20 and "x_{0,1}" in a


def test_gen_gt2(capsys):
    code, out, _ = run(capsys, "gen", "gt", "--n", "2")
    assert code == EXIT_OK and len(parse_dimacs(out)) == 2


def test_gen_gpeb_count(capsys):
    code, out, _ = run(capsys, "gen", "gpeb", "--pyramid", "2", "--k", "2", "--seed", "7")
    assert code == EXIT_OK and len(parse_dimacs(out)) == 2 * 32


def test_gen_gpeb_one_step_needs_fresh_guard(capsys):
    code, _, err = run(capsys, "gen", "gpeb", "--pyramid", "1", "--k", "1")
    assert code == EXIT_USAGE and "guard" in err
    code, _, _ = run(capsys, "gen", "gpeb", "--pyramid", "1", "--k", "1", "--fresh-guard")
    assert code == EXIT_OK


@pytest.mark.parametrize("argv", [
    ("prove", "ggt", "--n", "3"),
    ("gen", "gt", "--n", "1"),
    ("gen", "gpeb", "--k", "2"),
    ("prove", "ggt", "--n", "x"),
    ("bogus",),
    ("check", "missing.cnf", "missing.proof"),
    ("fit",),
])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == EXIT_USAGE


def test_prove_and_check_round_trip(tmp_path, capsys):
    code, out, _ = run(capsys, "prove", "ggt", "--n", "8", "--seed", "3", "--mode", "regrti",
                       "--out-dir", str(tmp_path))
    assert code == EXIT_OK and "ok" in out
    cnf = tmp_path / "ggt_n8_s3.cnf"
    proof = tmp_path / "ggt_n8_s3_regrti.proof"
    stats = json.loads((tmp_path / "ggt_n8_s3_regrti.json").read_text())
    assert stats["ok"] and stats["params"] == {"n": 8, "seed": 3}
    assert all(v["ok"] for v in stats["checks"])
    code, out, _ = run(capsys, "check", str(cnf), str(proof))
    report = json.loads(out)
    assert code == EXIT_OK and report["ok"] and report["refutation"]
    # byte-identical reruns
    first = proof.read_bytes()
    run(capsys, "prove", "ggt", "--n", "8", "--seed", "3", "--mode", "regrti",
        "--out-dir", str(tmp_path))
    assert proof.read_bytes() == first


def test_prove_gpeb(tmp_path, capsys):
    code, _, _ = run(capsys, "prove", "gpeb", "--pyramid", "2", "--k", "1", "--mode", "regrti",
                     "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    rec = json.loads((tmp_path / "gpeb_h2_k1_s0_regrti.json").read_text())
    assert rec["construction"]["templates"] >= 0 and rec["proof"]["node_count"] > 0


def test_prove_gpeb_from_graph_file(tmp_path, capsys):
    g = tmp_path / "tri.dag"
    g.write_text("6 6 0\n1 0\n2 0\n3 1\n4 1\n4 2\n5 2\n")
    code, _, _ = run(capsys, "prove", "gpeb", "--graph", str(g), "--k", "2", "--mode", "regrti",
                     "--out-dir", str(tmp_path))
    assert code == EXIT_OK and (tmp_path / "gpeb_tri_k2_s0_regrti.proof").exists()


def test_check_detects_mutation_and_parse_errors(tmp_path, capsys):
    run(capsys, "prove", "ggt", "--n", "5", "--out-dir", str(tmp_path))
    cnf = tmp_path / "ggt_n5_s0.cnf"
    proof = tmp_path / "ggt_n5_s0_pool.proof"
    lines = proof.read_text().splitlines()
    # change the pivot variable of the root inference
    parts = lines[-1].split()
    parts[4] = str(int(parts[4]) % 10 + 1)
    bad = tmp_path / "bad.proof"
    bad.write_text("\n".join(lines[:-1] + [" ".join(parts)]) + "\n")
    code, out, _ = run(capsys, "check", str(cnf), str(bad), "--checks", "soundness")
    rep = json.loads(out)
    assert code == EXIT_FAIL and not rep["ok"] and rep["checks"][0]["node"] == len(lines) - 1
    broken = tmp_path / "broken.proof"
    broken.write_text("\n".join(lines[:3] + ["4 R x"] + lines[4:]) + "\n")
    code, out, _ = run(capsys, "check", str(cnf), str(broken))
    rep = json.loads(out)
    assert code == EXIT_FAIL and rep["error"] == "parse" and rep["line"] == 4


def test_check_rejects_unknown_check(tmp_path, capsys):
    assert run(capsys, "check", "a", "b", "--checks", "nope")[0] == EXIT_USAGE


def test_solve(tmp_path, capsys):
    code, out, _ = run(capsys, "solve", "--n", "6", "--seed", "0", "--export-proof",
                       "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    rec = json.loads((tmp_path / "ggt_n6_s0_transitivity.json").read_text())
    assert rec["status"] == "UNSAT" and rec["solver"]["restarts"] == 0
    trace = (tmp_path / "ggt_n6_s0_transitivity.trace").read_text()
    assert trace.rstrip().endswith("c UNSAT")


def test_sweep_with_jobs_matches_serial(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "prove", "ggt", "--n", "4..6", "--seed", "0,1", "--out-dir", str(a),
               "--quiet")[0] == EXIT_OK
    assert run(capsys, "prove", "ggt", "--n", "4..6", "--seed", "0,1", "--out-dir", str(b),
               "--jobs", "2", "--quiet")[0] == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert len(names) == 3 * 2 * 3
    assert names == sorted(p.name for p in b.iterdir())
    for nm in names:
        assert (a / nm).read_bytes() == (b / nm).read_bytes()


def test_fit_on_synthetic_cubic(tmp_path, capsys):
    files = []
    for n in range(4, 15):
        p = tmp_path / f"s{n}.json"
        p.write_text(json.dumps({"params": {"n": n}, "proof": {"node_count": 7 * n ** 3}}))
        files.append(str(p))
    code, out, _ = run(capsys, "fit", *files, "--json")
    rep = json.loads(out)
    assert code == EXIT_OK and f"{rep['slope']:.2f}" == "3.00"
    code, out, _ = run(capsys, "fit", *files)
    assert out.startswith("slope 3.00")


def test_fit_on_prove_sweep(tmp_path, capsys):
    run(capsys, "prove", "ggt", "--n", "4..9", "--seed", "0,1", "--out-dir", str(tmp_path), "--quiet")
    files = [str(p) for p in tmp_path.glob("*.json")]
    code, out, _ = run(capsys, "fit", *files, "--json", "--x-min", "6")
    rep = json.loads(out)
    assert code == EXIT_OK and 0 < rep["slope"] <= 6.5
    assert [r["x"] for r in rep["table"]] == [6, 7, 8, 9]


def test_helpers():
    assert parse_int_list("4..6,9") == [4, 5, 6, 9]
    slope, _ = loglog_fit([1, 2, 4], [3, 12, 48])
    assert abs(slope - 2) < 1e-12
    rep = growth_report({2: [8, 8], 4: [64]})
    assert rep["table"][1]["ratio_prev"] == 8
