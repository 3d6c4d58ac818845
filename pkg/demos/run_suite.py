"""Run every shipped experiment config through the command line and print
a one-line summary per run. Reports land in demos/out/<config name>/."""

import contextlib
import io
import json
import os
from pathlib import Path

from mmlagrange.cli import dispatch

HERE = Path(__file__).resolve().parent


def main():
    for cfg in sorted((HERE / "configs").glob("*.json")):
        os.environ["OUTPUT_DIR"] = str(HERE / "out" / cfg.stem)
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = dispatch(["mosco", "run", "--config", str(cfg)])
        d = json.loads(buf.getvalue())
        s = d["summary"]
        print(f"{cfg.stem:26s} exit {code}  checks {d['n_checks']:4d}  violations {s['violations']}  "
              f"infeasible {s['infeasible']}  margin {d['margins']['margin']:+.3e}")


if __name__ == "__main__":
    main()
