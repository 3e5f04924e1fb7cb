def parent(i, d):
    return (i - 1) // d


def children(i, d):
    return range(d * i + 1, d * i + d + 1)
