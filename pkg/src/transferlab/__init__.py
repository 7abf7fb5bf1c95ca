"""Transfer-learning laboratory for per-branch sales forecasting.

The package trains a small convolutional forecaster per retail branch,
transfers each trained network along every permutation path of the branch
set (up to a configurable path length), measures how much each transfer
helped or hurt, and relates that to indicators that can be computed
*before* any transfer happens: divergence between branch datasets (raw
and after projection to the plane) and representational similarity
between the trained networks.

Subpackage layout is flat; the modules one usually wants:

- ``data``        loading / synthesis / windowing of daily sales series
- ``model``       the multi-head 1-D CNN forecaster (pure numpy, hand AD)
- ``transfer``    path enumeration and the exhaustive transfer sweep
- ``divergence``  energy-distance between branch sample clouds
- ``projections`` PCA / classical MDS / exact t-SNE to the plane + KDE
- ``netsim``      SVCCA similarity between trained networks
- ``stats``       Spearman rank correlation and one-sample t test
- ``report``      indicator/transferability association tables
- ``pipeline``    run configuration plus the staged end-to-end pipeline
- ``cli``         the ``transferlab`` command line front end
"""

__version__ = "0.1.0"
