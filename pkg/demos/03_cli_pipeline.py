"""The command-line pipeline end to end, in a scratch directory.

generate -> train -> detect -> attribute -> evaluate -> crossval -> sweep.
Each step prints the files it wrote; the last part shows the evaluation
tables and checks that a rerun reproduces them byte for byte.

    python3 demos/03_cli_pipeline.py [workdir]
"""

import hashlib
import json
import subprocess
import sys
import tempfile
from pathlib import Path

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="rcdetect-demo-"))
work.mkdir(parents=True, exist_ok=True)
config = work / "config.json"
config.write_text(json.dumps({"scenario": {"n_devices": 3, "duration_s": 300}, "tree_candidates": [5, 15, 25]}))
corpus, out = work / "corpus", work / "out"
capture = str(corpus / "capture.pcap")


def rcdetect(*args):
    cmd = [sys.executable, "-m", "rcdetect", *args, "--config", str(config), "--seed", "7"]
    print("$ rcdetect " + " ".join(args))
    done = subprocess.run(cmd, capture_output=True, text=True)
    print("  " + (done.stdout.strip() or done.stderr.strip()).replace("\n", "\n  "))
    if done.returncode:
        sys.exit(done.returncode)


rcdetect("generate", "--out", str(corpus))
rcdetect("train", "--input", capture, "--out", str(out))
rcdetect("detect", "--input", capture, "--model", str(out / "model.json"), "--out", str(out))
rcdetect("attribute", "--input", capture, "--model", str(out / "model.json"), "--out", str(out))
rcdetect("evaluate", "--input", capture, "--out", str(out), "--classifier", "rf", "--paper-literal")
rcdetect("crossval", "--input", capture, "--out", str(out), "--protocol", "tcp")
rcdetect("sweep", "--input", capture, "--out", str(out), "--classifier", "svm")

print("\n" + (out / "report.txt").read_text())

digest = hashlib.sha256((out / "report.csv").read_bytes()).hexdigest()
rcdetect("evaluate", "--input", capture, "--out", str(out), "--classifier", "rf", "--paper-literal")
again = hashlib.sha256((out / "report.csv").read_bytes()).hexdigest()
print("rerun identical:", digest == again)
print("outputs in", work)
