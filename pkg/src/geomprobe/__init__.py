"""Statistical tests for geometric constructs and a common unit of length in site surveys."""
from .circlefit import (CircleEstimate, DigitizedSet, aggregate_passes, calibrate_scale, fit_circle)
from .constructs import (Hypothesis, UnitEstimate, builtin_catalog, estimate_unit, evaluate_hypothesis,
                         quantogram_scan, run_battery)
from .geometry import (PHI, Point2D, TargetConstant, angle_at, construct_equilateral, construct_golden_rectangle,
                       distance, inscribed_circumscribed, ratio)
from .nullmodel import NullPrior, estimate_fpr, sample_null_site
from .report import emit_tables, render_overlay
from .stats import (bonferroni, chi2_sf_1dof, scatter_average, test_against_constant, test_equal)
from .survey import (Level, Measurement, SurveySite, Unit, evaluate_derived_span, load_site,
                     resolve_measurement, sun_temple)

__version__ = "0.1.0"
