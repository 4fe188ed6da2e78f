"""
Driving the experiments from the command line
=============================================

Each experiment lives in a TOML file under ``experiments/``. The ``dmol``
command runs it and writes CSV/JSON artifacts; this script calls the same
entry point in-process and shows the files it produces.
"""

import pathlib
import tempfile

from dmol.cli import main

root = pathlib.Path(__file__).resolve().parents[1] / "experiments"
out = pathlib.Path(tempfile.mkdtemp(prefix="dmol-"))

# %%
# Forward solve: samples of u on a (rho, phi) grid plus the retained spectrum.
main(["forward", str(root / "star5.toml"), "-o", str(out / "star5")])
print(sorted(p.name for p in (out / "star5").iterdir()))

# %%
# A short convergence table for the crack problem (Table-style CSV).
main(["convergence", str(root / "crack_p1.toml"), "-o", str(out / "crack"), "--M", "16", "32", "64"])
print((out / "crack" / "errors.csv").read_text())

# %%
# Synthetic data and a few inversion steps; ``--set`` overrides config keys.
cfg = str(root / "star3_noise.toml")
main(["synthesize", cfg, "-o", str(out / "star3"), "--set", "measurement.M_ref=64"])
main(["invert", cfg, "-o", str(out / "star3"), "--set", "inverse.max_iter=10"])
print((out / "star3" / "history.csv").read_text())
