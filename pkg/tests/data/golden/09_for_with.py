total = 0
for first, *rest in [(1, 2, 3)]:
    total += first

with open("f") as fh, open("g") as gh:
    data = fh.read() + gh.read()
