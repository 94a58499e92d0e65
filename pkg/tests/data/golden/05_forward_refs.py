def before():
    return helper()


def helper():
    return 1


def after():
    return helper()
