"""Matter fields on a flat bundle and on a curved product geometry.

A plane wave with the right mass solves the scalar equation.  A pure-gauge
covector has vanishing field strength, so the massless first-order equation
holds exactly, while the divergence constraint is a separate condition on the
gauge function.
"""

import numpy as np

from lageom import fields as fl
from lageom.bundle import Geometry, GeometrySpec
from lageom.dconnection import build_connection

flat = Geometry(GeometrySpec(2, 2, g=[["1", "0"], ["0", "1"]], h=[["1", "0"], ["0", "1"]], N=[["0", "0"], ["0", "0"]]))
conn = build_connection(flat, "canonical")
k = np.array([0.7, -0.3, 0.5, 0.2])
wave = fl.MatterField("scalar", [f"sin({k[0]}*x1 + {k[1]}*x2 + {k[2]}*y1 + {k[3]}*y2)"], float(np.linalg.norm(k)))
u = np.array([0.2, 0.4, -0.1, 0.3])
print("plane-wave residual:", fl.scalar_field_ops(flat, conn, wave, u).max_residual)

curved = Geometry(GeometrySpec(2, 2, g=[["1+0.3*x1*x1", "0.1*x2"], ["0.1*x2", "2+sin(x1)"]],
                               h=[["1+0.2*y1*y1", "0"], ["0", "1.5+0.1*y1*y2"]], N=[["0", "0"], ["0", "0"]]))
gauge = fl.pure_gauge(curved, "x1*x2*y1 + sin(y2*x1)")
rep = fl.proca_ops(curved, build_connection(curved, "canonical"), gauge, u)
print("pure-gauge field strength max |f|:", np.max(np.abs(rep.f)))
print("Maxwell-limit residuals:", rep.max_residuals)
