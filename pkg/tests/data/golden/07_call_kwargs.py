def resize(width, height=0):
    return width * height


width = 4
area = resize(width, height=width)
