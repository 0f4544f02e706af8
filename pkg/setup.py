"""Build shim for the optional compiled kernels.

The package is fully functional without the extensions (numpy fallbacks are
selected at import time), so a failed native build must not break install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                f"srsloc._kernels.{name}",
                [f"src/srsloc/_kernels/{name}.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
            for name in ("_metric_cy", "_pursuit_cy")
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    print(f"warning: building without compiled kernel ({exc})")

setup(ext_modules=ext_modules)
