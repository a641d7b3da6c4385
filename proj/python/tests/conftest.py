import os
import sys

# Under ctest, import the freshly built module rather than any installed copy.
_staged = os.environ.get("TILTSHIFT_EXPECT_MODULE_DIR")
if _staged:
    sys.meta_path[:] = [f for f in sys.meta_path if "ScikitBuild" not in type(f).__name__]
    sys.path.insert(0, _staged)
    sys.modules.pop("tiltshift", None)
