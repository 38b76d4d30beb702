"""Privacy-preserving medical imaging pipeline at desk scale.

DICOM ingest, a wavelet codec, AES-CBC containers, a keyed block mask, a
small numpy CNN, leakage metrics, a policy-gated vault and a benchmark
harness, all driven from the ``semcrypt`` command line.
"""

__version__ = "0.1.0"
