import importlib.util
from pathlib import Path


def test_benchmark_runs_and_backends_agree(capsys):
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_hot.py"
    spec = importlib.util.spec_from_file_location("bench_hot", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--points", "20", "--repeat", "1"])
    out = capsys.readouterr().out
    assert "trace" in out and "retarded_sum" in out
