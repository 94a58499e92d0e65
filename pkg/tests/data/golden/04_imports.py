import os
import sys as system
from json import dumps

path = os.path.join(os.sep, "tmp")
out = dumps(path)
