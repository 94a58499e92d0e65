values = [1, 2, 3]
doubled = [item * 2 for item in values if item]
table = {key: key + 1 for key in values}
pairs = [(a, b) for a in values for b in values]
