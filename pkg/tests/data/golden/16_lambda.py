scale = 10
double = lambda v: v * 2
clamp = lambda lo, hi=scale: min(hi, max(lo, 0))
result = double(scale)
