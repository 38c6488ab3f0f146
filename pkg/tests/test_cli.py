import json
import sys

import numpy as np
import pytest

from vineshap import burr_sample, study_params
from vineshap.cli import main, make_predictor, read_csv


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture
def train_csv(tmp_path):
    path = tmp_path / "train.csv"
    x = burr_sample(study_params(1.0, M=3), 200, np.random.default_rng(0))
    lines = ["x1,x2,x3"] + [",".join(repr(v) for v in row.tolist()) for row in x]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def test_csv(tmp_path):
    path = tmp_path / "test.csv"
    x = burr_sample(study_params(1.0, M=3), 3, np.random.default_rng(1))
    lines = ["x1,x2,x3"] + [",".join(repr(v) for v in row.tolist()) for row in x]
    path.write_text("\n".join(lines) + "\n")
    return path


# ----------------------------------------------------------------------
# csv layer

def test_read_csv_reports_bad_cell(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1.0,2.0\n1.0,oops\n")
    from vineshap.errors import DataError
    with pytest.raises(DataError, match=r"row 3.*'b'"):
        read_csv(p)


def test_read_csv_reports_ragged_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1.0\n")
    from vineshap.errors import DataError
    with pytest.raises(DataError, match="row 2"):
        read_csv(p)


def test_read_csv_rejects_duplicate_columns(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,a\n1.0,2.0\n")
    from vineshap.errors import DataError
    with pytest.raises(DataError, match="duplicate"):
        read_csv(p)


# ----------------------------------------------------------------------
# predictors

def test_const_predictor():
    g = make_predictor("const:2.5", ["a", "b"])
    assert np.allclose(g(np.zeros((4, 2))), 2.5)


def test_linear_predictor():
    g = make_predictor("linear:1,2", ["a", "b"])
    assert g(np.array([[3.0, 4.0]]))[0] == pytest.approx(11.0)


def test_linear_predictor_wrong_arity():
    from vineshap.errors import InvalidInputError
    with pytest.raises(InvalidInputError):
        make_predictor("linear:1,2,3", ["a", "b"])


def test_cmd_predictor_roundtrip(tmp_path):
    script = tmp_path / "pred.py"
    script.write_text(
        "import sys\n"
        "rows = sys.stdin.read().splitlines()[1:]\n"
        "for r in rows:\n"
        "    print(sum(float(t) for t in r.split(',')))\n")
    g = make_predictor(f"cmd:{sys.executable} {script}", ["a", "b"])
    out = g(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.allclose(out, [3.0, 7.0])


def test_cmd_predictor_protocol_violation(tmp_path):
    script = tmp_path / "pred.py"
    script.write_text("print(1.0)\n")   # always one line regardless of input
    from vineshap.errors import DataError
    g = make_predictor(f"cmd:{sys.executable} {script}", ["a"])
    with pytest.raises(DataError, match="protocol"):
        g(np.zeros((3, 1)))


# ----------------------------------------------------------------------
# simulate

def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--p", "0.5", "--b", "2,4,6", "--r", "1,3,5",
            "--n", "50", "--seed", "3"]
    assert run_cli(*args, "--out", str(a)) == 0
    assert run_cli(*args, "--out", str(b)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_n_zero_header_only(tmp_path):
    out = tmp_path / "empty.csv"
    assert run_cli("simulate", "--p", "1", "--b", "2", "--r", "1",
                   "--n", "0", "--out", str(out)) == 0
    assert out.read_text().strip() == "x1"


def test_simulate_invalid_params(tmp_path):
    out = tmp_path / "x.csv"
    assert run_cli("simulate", "--p", "-1", "--b", "2", "--r", "1",
                   "--n", "5", "--out", str(out)) == 3


# ----------------------------------------------------------------------
# fit

def test_fit_two_columns_single_order(tmp_path):
    p = tmp_path / "t.csv"
    x = np.random.default_rng(2).normal(size=(100, 2))
    p.write_text("a,b\n" + "\n".join(f"{r[0]!r},{r[1]!r}" for r in x.tolist()) + "\n")
    out = tmp_path / "m.json"
    assert run_cli("fit", str(p), "--method", "vine-parametric",
                   "--shap-method", "ratio", "--out", str(out)) == 0
    bundle = json.loads(out.read_text())
    assert len(bundle["plan"]["orders"]) == 1
    assert len(bundle["models"]) == 1
    assert sum(len(row) for row in bundle["models"][0]["pairs"]) == 1


def test_fit_three_columns_condsim_two_orders(train_csv, tmp_path):
    out = tmp_path / "m.json"
    assert run_cli("fit", str(train_csv), "--method", "vine-parametric",
                   "--shap-method", "condsim", "--out", str(out)) == 0
    bundle = json.loads(out.read_text())
    assert len(bundle["plan"]["orders"]) == 2


def test_fit_byte_identical(train_csv, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert run_cli("fit", str(train_csv), "--method", "vine-parametric",
                       "--seed", "4", "--out", str(out)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_fit_missing_file(tmp_path):
    assert run_cli("fit", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "m.json")) == 3


def test_fit_rejects_too_many_columns(tmp_path):
    p = tmp_path / "wide.csv"
    cols = [f"c{i}" for i in range(21)]
    rows = np.random.default_rng(3).normal(size=(40, 21))
    p.write_text(",".join(cols) + "\n"
                 + "\n".join(",".join(map(repr, r.tolist())) for r in rows) + "\n")
    assert run_cli("fit", str(p), "--out", str(tmp_path / "m.json")) == 3


# ----------------------------------------------------------------------
# explain

@pytest.mark.parametrize("method,shap_method", [
    ("vine-parametric", "ratio"),
    ("vine-parametric", "condsim"),
    ("gaussian", "ratio"),
    ("gaussian-copula", "ratio"),
])
def test_explain_efficiency(train_csv, test_csv, tmp_path, method, shap_method):
    model = tmp_path / "m.json"
    out = tmp_path / "e.json"
    assert run_cli("fit", str(train_csv), "--method", method,
                   "--shap-method", shap_method, "--out", str(model)) == 0
    assert run_cli("explain", str(model), str(test_csv),
                   "--predictor", "linear:1,1,1", "--k", "200",
                   "--seed", "1", "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    _, test = read_csv(test_csv)
    assert len(doc["explanations"]) == 3
    for rec in doc["explanations"]:
        gx = float(np.sum(test[rec["row_id"]]))
        assert abs(rec["phi0"] + sum(rec["phi"]) - gx) < 1e-8


def test_explain_constant_predictor(train_csv, test_csv, tmp_path):
    model = tmp_path / "m.json"
    out = tmp_path / "e.json"
    run_cli("fit", str(train_csv), "--out", str(model))
    assert run_cli("explain", str(model), str(test_csv),
                   "--predictor", "const:9.0", "--k", "50",
                   "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    for rec in doc["explanations"]:
        assert rec["phi0"] == pytest.approx(9.0)
        assert np.allclose(rec["phi"], 0.0, atol=1e-10)


def test_explain_methods_disagree_but_both_efficient(train_csv, test_csv, tmp_path):
    phis = {}
    for method in ("vine-parametric", "gaussian-copula"):
        model = tmp_path / f"{method}.json"
        out = tmp_path / f"{method}-e.json"
        run_cli("fit", str(train_csv), "--method", method, "--out", str(model))
        run_cli("explain", str(model), str(test_csv),
                "--predictor", "linear:1,2,3", "--k", "500",
                "--seed", "2", "--out", str(out))
        doc = json.loads(out.read_text())
        phis[method] = np.array([r["phi"] for r in doc["explanations"]])
    assert not np.allclose(phis["vine-parametric"], phis["gaussian-copula"])


def test_explain_column_mismatch(train_csv, tmp_path):
    model = tmp_path / "m.json"
    run_cli("fit", str(train_csv), "--out", str(model))
    bad = tmp_path / "bad.csv"
    bad.write_text("wrong,names,here\n1.0,1.0,1.0\n")
    assert run_cli("explain", str(model), str(bad),
                   "--predictor", "const:0", "--out", str(tmp_path / "e.json")) == 3


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        run_cli("explain")   # missing required arguments
    assert exc.value.code == 2


# ----------------------------------------------------------------------
# bench

def write_bench_config(path, **kw):
    base = dict(p=1.0, m=3, n_train=120, n_test=2, reps=2, k=100,
                k_oracle=1000, methods="independence,gaussian-copula", seed=0)
    base.update(kw)
    path.write_text("".join(f"{k}={v}\n" for k, v in base.items()))


def test_bench_deterministic_and_shaped(tmp_path):
    cfg = tmp_path / "bench.cfg"
    write_bench_config(cfg)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert run_cli("bench", str(cfg), "--out-dir", str(out1)) == 0
    assert run_cli("bench", str(cfg), "--out-dir", str(out2)) == 0
    assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
    assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()
    results = (out1 / "results.csv").read_text().strip().splitlines()
    assert len(results) == 1 + 2 * 2          # header + methods x reps
    summary = (out1 / "summary.csv").read_text().strip().splitlines()
    assert len(summary) == 1 + 2
    assert (out1 / "timing.csv").exists()
    assert (out1 / "manifest.txt").read_text().startswith("p=1.0")


def test_bench_single_rep_row_count(tmp_path):
    cfg = tmp_path / "bench.cfg"
    write_bench_config(cfg, reps=1, methods="independence")
    out = tmp_path / "o"
    assert run_cli("bench", str(cfg), "--out-dir", str(out)) == 0
    results = (out / "results.csv").read_text().strip().splitlines()
    assert len(results) == 2


def test_bench_unknown_key(tmp_path):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text("bogus=1\n")
    assert run_cli("bench", str(cfg), "--out-dir", str(tmp_path / "o")) == 3
