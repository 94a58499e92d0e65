def quick(n): return n + 1


class Flat: tag = 1


if True: a = 1; b = quick(a)


@property
def decorated(self):
    return self
