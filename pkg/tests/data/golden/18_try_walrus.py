def parse(text):
    try:
        if (n := len(text)) > 3:
            return n
    except ValueError as err:
        del text
        raise err
    finally:
        pass
    return 0
