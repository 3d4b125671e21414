import json

import numpy as np
import pytest

from spiked_deflation.cli import main
from spiked_deflation.config import ConfigError, ExperimentConfig, Grid, paper_config
from spiked_deflation.deflation import SummaryStatistics
from spiked_deflation.experiments import (
    CSV_HEADER,
    align_signs,
    read_sweep_csv,
    run_spectrum,
    run_sweep,
    sweep_csv,
    trial_seed,
)
from spiked_deflation.plotting import emit_plot


def small_cfg(tmp_path, **kw):
    doc = {
        "model": {"n": 20, "d": 3, "beta": [1.0, 5.0], "alpha": 0.4,
                  "beta1_grid": {"start": 7.0, "stop": 9.0, "steps": 2}},
        "trials": 2,
        "base_seed": 3,
        "power_iter": {"max_iters": 2000, "restarts": 3},
        "outputs": {"directory": str(tmp_path / "out")},
    }
    doc.update(kw)
    return doc


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"trails": 3})
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"model": {"n": 10, "bogus": 1}})


def test_power_seed_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"power_iter": {"seed": 4}})


def test_grid_validation():
    assert Grid(1, 10, 10).values() == [float(k) for k in range(1, 11)]
    with pytest.raises(ConfigError):
        Grid(5, 1, 3).values()
    with pytest.raises(ConfigError):
        Grid(1, 2, 0).values()


def test_alpha_and_gram_exclusive():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": {"alpha": 0.3, "gram": [[1, 0], [0, 1]]}})


def test_paper_config_defaults():
    cfg = paper_config()
    assert cfg.model.beta1_values() == [float(k) for k in range(1, 11)]
    assert cfg.trials == 20 and cfg.model.gram[0][1] == 0.4


def test_trial_seed_distinct():
    seeds = {trial_seed(0, g, t) for g in range(10) for t in range(20)}
    assert len(seeds) == 200
    assert trial_seed(1, 0, 0) != trial_seed(0, 0, 0)


def test_align_signs_even_order():
    stats = SummaryStatistics(np.array([3.0, 2.0]), np.array([[-0.9, 0.1], [0.2, 0.8]]),
                              np.array([[1.0, -0.3], [-0.3, 1.0]]))
    out = align_signs(stats, 4)
    assert np.all(np.diag(out.rho_hat) >= 0)
    assert out.eta_hat[0, 1] == pytest.approx(0.3)
    assert align_signs(stats, 3) is stats


def test_sweep_rejects_rank_one(tmp_path):
    doc = small_cfg(tmp_path)
    doc["model"] = {"n": 10, "beta": [3.0]}
    with pytest.raises(ConfigError):
        run_sweep(ExperimentConfig.from_dict(doc), workers=1, write=False)


def test_small_sweep_outputs_and_determinism(tmp_path):
    cfg = ExperimentConfig.from_dict(small_cfg(tmp_path, trials=1))
    rows, paths = run_sweep(cfg, workers=1)
    names = sorted(p.name for p in paths)
    assert "sweep.csv" in names and "sweep.json" in names
    assert any(n.endswith(".svg") for n in names)
    first = (tmp_path / "out" / "sweep.csv").read_bytes()
    rows2, _ = run_sweep(cfg, workers=1)
    assert (tmp_path / "out" / "sweep.csv").read_bytes() == first
    assert first.decode().splitlines()[0].split(",") == CSV_HEADER
    back = read_sweep_csv(tmp_path / "out" / "sweep.csv")
    assert [r["beta1"] for r in back] == [7.0, 9.0]
    for r in back:
        assert isinstance(r["converged"], bool)
    assert sweep_csv(rows2).encode() == first


def test_read_csv_rejects_bad_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_sweep_csv(p)


def test_emit_plot_empty_writes_nothing(tmp_path):
    out = tmp_path / "p.svg"
    with pytest.raises(ValueError):
        emit_plot([], "alignments", out)
    assert not out.exists()


def test_emit_plot_deterministic(tmp_path):
    rows = [{"beta1": b, "rho11_mean": 0.5 + 0.01 * b, "rho11_std": 0.02, "rho11_pred": 0.5,
             "rho12_mean": 0.3, "rho12_std": None, "rho12_pred": None}
            for b in (1.0, 2.0, 3.0)]
    a = emit_plot(rows, "alignments", tmp_path / "a.svg").read_bytes()
    b = emit_plot(rows, "alignments", tmp_path / "b.svg").read_bytes()
    assert a == b and a.startswith(b"<svg")
    with pytest.raises(ValueError):
        emit_plot(rows, "nope", tmp_path / "c.svg")


def test_spectrum_pure_noise(tmp_path):
    doc = small_cfg(tmp_path, spectrum={"seeds": 2})
    doc["model"] = {"n": 60, "d": 3}
    cfg = ExperimentConfig.from_dict(doc)
    reps, paths = run_spectrum(cfg)
    reps2, _ = run_spectrum(cfg, write=False)
    assert [r.ks_distance for r in reps] == [r.ks_distance for r in reps2]
    assert {p.name for p in paths} == {"spectrum.json", "spectrum.csv", "spectrum.svg"}
    assert all(r.ks_distance < 0.15 for r in reps)


def test_spectrum_spiked_has_outlier(tmp_path):
    doc = small_cfg(tmp_path, spectrum={"seeds": 1, "spiked": True})
    doc["model"] = {"n": 60, "d": 3, "beta": [8.0]}
    reps, _ = run_spectrum(ExperimentConfig.from_dict(doc), write=False)
    assert reps[0].outliers.size >= 1


def test_cli_sweep_and_plot(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small_cfg(tmp_path, trials=1))
    assert main(["sweep", "--config", str(cfg), "--workers", "1"]) == 0
    csv_path = tmp_path / "out" / "sweep.csv"
    assert csv_path.exists()
    out = tmp_path / "fig.svg"
    assert main(["plot", "--input", str(csv_path), "--kind", "eigenvalues",
                 "--output", str(out)]) == 0
    assert out.read_text().startswith("<svg")


def test_cli_bad_config_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, {"model": {"nn": 3}})
    assert main(["sweep", "--config", str(cfg)]) == 1


def test_cli_solve_forward_and_inverse(capsys):
    assert main(["solve", "--mode", "forward", "--params",
                 json.dumps({"beta": [8, 5], "alpha": 0.4})]) == 0
    fwd = json.loads(capsys.readouterr().out)
    assert fwd["converged"]
    sol = fwd["solution"]
    assert main(["solve", "--mode", "inverse", "--params",
                 json.dumps({"lambda": sol["lambda"], "eta": sol["eta"]})]) == 0
    inv = json.loads(capsys.readouterr().out)
    assert sorted(inv["solution"]["beta"]) == pytest.approx([5, 8], abs=1e-6)


def test_cli_solve_domain_error():
    assert main(["solve", "--mode", "inverse", "--params",
                 json.dumps({"lambda": [6.0, 1.0], "eta": 0.3})]) == 1


def test_cli_solve_nonconvergence_exit_code():
    spec = {"beta": [8, 5], "alpha": 0.4, "solver": {"max_iters": 1, "tol": 1e-30},
            "init": {"lambda": [8.5, 4.5], "rho": [[0.98, 0.5], [0.25, 0.98]], "eta": 0.4}}
    assert main(["solve", "--mode", "forward", "--params", json.dumps(spec)]) == 2


def test_cli_deflate_dump_stats(tmp_path, capsys):
    doc = small_cfg(tmp_path)
    doc["model"] = {"n": 20, "d": 3, "beta": [8.0, 5.0], "alpha": 0.4}
    cfg = write_cfg(tmp_path, doc)
    assert main(["deflate", "--config", str(cfg), "--dump-stats"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["fits"]) == 2
    assert "summary_statistics" in out
