def f(a, b=1, *args, c: int = 2, **kwargs):
    return a + b + c + len(args) + len(kwargs)
