class Node:
    def __init__(self, parent):
        self.parent = parent
        self.parent.child = None
        other = parent
        other.link = self
