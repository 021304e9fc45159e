import runpy
from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


def test_benchmark_runs(capsys):
    mod = runpy.run_path(str(BENCH))
    mod["main"](["--nodes", "30", "--edges", "40", "200", "--steps", "5"])
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split()[0] == "edges" and len(lines) == 3
