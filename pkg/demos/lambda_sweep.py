"""
How much does the alignment term matter?
=========================================

Sweep the weight on the alignment loss and measure how well the
extended test points keep the geometry of the reference alignment.
Without the term (lambda = 0) the encoders only have the anchors and
reconstruction to go on.
"""

from pathlib import Path

from twinalign.evaluation import ExperimentReport, run_lambda_sweep
from twinalign.plotting import plot_report

out = Path("lambda_sweep.csv")
report = run_lambda_sweep("iris", "random", ["MASH", "SPUD"], seeds=(0,), report=ExperimentReport("lambda-sweep", out))
for row in report.summary()["table"]:
    print(f"{row['method']:5s} lambda={row['lam']:>7g}  mean r={row['mean_r']:.3f}")

# rerunning resumes: completed rows are skipped
svg, data = plot_report(out)
print("wrote", svg, "and", data)
