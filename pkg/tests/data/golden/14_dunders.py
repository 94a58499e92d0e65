__version__ = "1.0"


class Point:
    def __init__(self, x):
        self.x = x

    def __repr__(self):
        return repr(self.x) + __name__
