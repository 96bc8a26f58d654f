"""
The command-line pipeline: generate, crossval, report
=====================================================

Every step of the workflow is exposed as a `kickdir` subcommand.  This
script drives the same entry point programmatically (kickdir.cli.main
is exactly what the console script calls) to run a small k-fold
cross-validation and re-render its report from the archived run
directory.
"""

from pathlib import Path
import tempfile

from kickdir.cli import EXIT_OK, main

tmp = Path(tempfile.mkdtemp())
data = tmp / "kicks.pkds"
run_dir = tmp / "run"
cfg = tmp / "train.cfg"

# A small training configuration, in the plain key=value format the
# --config flag consumes (any omitted key keeps its default).
cfg.write_text(
    "batch_size=8\n"
    "max_epochs=8\n"
    "patience=4\n"
    "lr=0.003\n"
    "k_folds=3\n"
    "state_size=4\n"
    "n_layers=1\n"
    "conv_width=3\n"
    "meta_dim=8\n"
    "fusion_hidden=32\n"
    "dropout=0.1\n"
    "augment=true\n"
    "seed=0\n")

# ---------------------------------------------------------------------
# Each main([...]) call below is the in-process equivalent of the shell
# command shown above it.
steps = [
    (f"kickdir generate --out {data} --samples 120 --dim 10 --seed 2 "
     f"--noise 0.45",
     ["generate", "--out", str(data), "--samples", "120",
      "--dim", "10", "--seed", "2", "--noise", "0.45"]),
    (f"kickdir crossval --data {data} --config {cfg} --out-dir {run_dir}",
     ["crossval", "--data", str(data), "--config", str(cfg),
      "--out-dir", str(run_dir)]),
    (f"kickdir report --run-dir {run_dir}",
     ["report", "--run-dir", str(run_dir)]),
    (f"kickdir report --run-dir {run_dir} --format svg",
     ["report", "--run-dir", str(run_dir), "--format", "svg"]),
]
for shell_line, argv in steps:
    print(f"$ {shell_line}\n")
    code = main(argv)
    assert code == EXIT_OK, f"exit code {code}"
    print()

# ---------------------------------------------------------------------
# The run directory is a complete archive: per-fold checkpoints and
# history logs, machine-readable metrics, and the rendered report.
print("run directory contents:")
for p in sorted(run_dir.rglob("*")):
    if p.is_file():
        rel = p.relative_to(run_dir)
        print(f"  {str(rel):<34} {p.stat().st_size:>7} bytes")
