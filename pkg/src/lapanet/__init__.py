"""Non-rigid motion estimation from undersampled multi-coil k-space.

Submodules: ``kspace`` (transforms and coil operators), ``sampling``
(Cartesian and golden-angle radial patterns), ``motion`` (fields, warping,
phantoms), ``lap`` (classical Local-All-Pass solver), ``model`` (the network,
gradient checks, Integrated Gradients), ``losses``, ``train``, ``metrics``,
``nps``, ``io`` and ``cli``. The torch-based parts are imported on demand.
"""
__version__ = "0.1.0"
