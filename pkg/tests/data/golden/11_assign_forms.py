a = b = 5
c: int = a
c += b
(d, e), f = (1, 2), 3
g = [0]
g[0] = d
