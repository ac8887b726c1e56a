"""Bound versus p for three densities, each checked against the oracle.

Runs the ``sweep`` command in-process and prints the CSV it would write.

    python demos/05_sweep.py
"""
import io
import json

from marginbound.cli import run

config = {
    "command": "sweep",
    "grid": {"bounds": [[0, 1], [0, 1]], "nodes": 16},
    "marginals": {"expression": "exp(x) * (1 + y) - 2"},
    "sweep": {
        "p_values": [1.25, 1.5, 2, 3, 4],
        "densities": [
            {"type": "uniform", "name": "uniform"},
            {"type": "product_mixture", "name": "mixture", "weights": [0.7, 0.3],
             "factors": [["1 + x", "1"], ["exp(-x)", "2 - y"]]},
            {"type": "tabulated", "name": "bilinear", "expression": "1 + x * y"},
        ],
    },
}
out, err = io.StringIO(), io.StringIO()
code = run(config, stdout=out, stderr=err)
print(err.getvalue())
print("exit code", code, "| worst rel diff", max(r["rel_diff"] for r in json.loads(out.getvalue())["rows"]))
