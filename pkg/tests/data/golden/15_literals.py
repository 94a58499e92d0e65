"""Module docstring stays."""
count = 42
ratio = 3.14
mask = 0xFF
big = 1_000_000
z = 2j
text = "hello" + f"{count}"
raw = r"\d+"
