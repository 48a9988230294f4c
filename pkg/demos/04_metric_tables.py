"""
Confusion-matrix metrics and Youden operating points
====================================================

Feeds published confusion counts through the metric functions, then
shows how a Youden-optimal threshold is picked from an ROC curve.
"""

import numpy as np

from coughhmm import binary_metrics, class_metrics, roc_binary, auc, youden_best
from coughhmm.evaluation import ConfusionMatrix, format_confusion

# Rows are predicted states, columns observed states (A..E)
univariate_test = np.array(
    [[31, 6, 1, 1, 7], [3, 45, 19, 6, 25], [3, 17, 29, 4, 5], [3, 2, 31, 21, 19], [13, 9, 65, 84, 714]]
)
m = ConfusionMatrix(univariate_test)
print(format_confusion(m))
print()

for name, counts in {"cough": (247, 230, 30, 656), "coughing": (371, 214, 22, 556)}.items():
    b = binary_metrics(*counts)
    print(f"{name:>9}: sensitivity {b.sensitivity:.1%}  specificity {b.specificity:.1%}  accuracy {b.accuracy:.1%}")

# A toy score set: positives tend to score higher
rng = np.random.default_rng(1)
truth = rng.random(300) < 0.3
scores = np.clip(rng.normal(0.35 + 0.3 * truth, 0.15), 0, 1)
curve = roc_binary(scores, truth, "cough")
best = youden_best(curve)
print()
print(f"AUC {auc(curve):.3f}; Youden threshold {best.threshold:.3f} "
      f"(sensitivity {best.sensitivity:.2f}, specificity {best.specificity:.2f}, J {best.j:.2f})")
