"""Walk through one prediction by hand.

Three anchors sit at x = 0, 1, 2 with levels 0, 0.1 and 2.  The middle one is
low, so the function is locally convex there.  A plain convex-hull smoother
would draw the chord from (0, 0) to (2, 2) and float above the middle anchor.
The conditionally convex predictor refuses that chord and uses the facet
through the two right-hand anchors instead.

    python3 demos/01_three_anchors.py
"""

import numpy as np

from ccinls.anchors import AnchorSet
from ccinls.certify import verify_conditional_convexity
from ccinls.predictor import CcPredictor, elasticity, marginal_products

anchors = AnchorSet(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 0.1, 2.0]))
pred = CcPredictor(anchors)

print("Is the outer chord admissible?")
for check in verify_conditional_convexity([0, 2], anchors):
    print(f"  anchor {check.k}: tau = {check.tau:+.3f}  {'ok' if check.passed else 'dominated'}")

p = pred.predict([1.5])
print(f"\ntheta(1.5)       = {p.theta:.4f}   (facet through anchors {p.active_set})")
print(f"marginal product = {marginal_products(p)[0]:.4f}")
print(f"scale elasticity = {elasticity(p)[0]:.4f}")

print("\nThe curve between and beyond the anchors:")
for x in np.linspace(-0.5, 2.5, 7):
    q = pred.predict([x])
    tag = "  (below every anchor: floor)" if q.extrapolated else ""
    print(f"  x = {x:+.2f}  theta = {q.theta:.4f}{tag}")
