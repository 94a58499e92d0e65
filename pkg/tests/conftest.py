import os
import sys

# make sibling helper modules (oracles, fuzz generators) importable
sys.path.insert(0, os.path.dirname(__file__))
