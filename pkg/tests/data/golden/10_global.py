counter = 0


def bump():
    global counter
    counter += 1


def outer():
    state = 0

    def inner():
        nonlocal state
        state += 1

    inner()
    return state
