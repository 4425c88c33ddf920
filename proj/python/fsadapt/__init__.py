from ._fsadapt import *  # noqa: F401,F403
from ._fsadapt import FsadaptError
