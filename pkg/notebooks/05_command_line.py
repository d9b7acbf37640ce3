"""
Batch runs from the command line
================================

The ``cavity-cz`` entry point reads an INI config. This script drives it
in-process on the shipped reference config and on a small hopping sweep.
"""

# %%
import csv
import tempfile
from pathlib import Path

from cavity_cz import cli

out = Path(tempfile.mkdtemp())

# %%
# Closed-form derivation and validity table.
cli.main(["derive", "--config", "paper_sec5", "--out", str(out / "derive.json")])

# %%
# A sweep of the cavity hopping nu with the vacuum-sector engine. The
# resonant point nu = delta is skipped with a reason.
cfg = out / "sweep.ini"
cfg.write_text(cli.load_config_text("paper_sec5").replace("engine = static-exact", "engine = eff-vacuum")
               + "\n[sweep]\nparameter = nu\nvalues = 0.2, 0.6, 1.2, 2.4\n")
rc = cli.main(["sweep", "--config", str(cfg), "--out", str(out / "sweep.csv")])
print("exit code", rc)
for row in csv.DictReader((out / "sweep.csv").open()):
    print(row["nu"], row["status"], row["eta_meV"], row["t_gate_ns"], row["reason"][:40])

# %%
# Short trajectory CSV.
cfg2 = out / "evolve.ini"
cfg2.write_text(cli.load_config_text("paper_sec5").replace("horizon = 2.0", "horizon = 0.01"))
cli.main(["evolve", "--config", str(cfg2), "--out", str(out / "traj.csv")])
print((out / "traj.csv").read_text().splitlines()[:3])
