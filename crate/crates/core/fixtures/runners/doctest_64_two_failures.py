"""Arithmetic helpers with a 64-example doctest suite; two expectations are wrong on purpose."""

def add(a, b):
    """Return a + b.

    >>> add(2, 3)
    5
    >>> add(7, 1)
    8
    >>> add(9, 4)
    13
    >>> add(5, 5)
    10
    >>> add(12, 3)
    15
    >>> add(8, 2)
    10
    >>> add(3, 7)
    10
    >>> add(10, 6)
    16
    """
    return a + b


def sub(a, b):
    """Return a - b.

    >>> sub(2, 3)
    -1
    >>> sub(7, 1)
    6
    >>> sub(9, 4)
    5
    >>> sub(5, 5)
    0
    >>> sub(12, 3)
    9
    >>> sub(8, 2)
    6
    >>> sub(3, 7)
    -4
    >>> sub(10, 6)
    4
    """
    return a - b


def mul(a, b):
    """Return a * b.

    >>> mul(2, 3)
    6
    >>> mul(7, 1)
    7
    >>> mul(9, 4)
    36
    >>> mul(5, 5)
    26
    >>> mul(12, 3)
    36
    >>> mul(8, 2)
    16
    >>> mul(3, 7)
    21
    >>> mul(10, 6)
    60
    """
    return a * b


def floordiv(a, b):
    """Return a // b.

    >>> floordiv(2, 3)
    0
    >>> floordiv(7, 1)
    7
    >>> floordiv(9, 4)
    2
    >>> floordiv(5, 5)
    1
    >>> floordiv(12, 3)
    4
    >>> floordiv(8, 2)
    4
    >>> floordiv(3, 7)
    0
    >>> floordiv(10, 6)
    1
    """
    return a // b


def maximum(a, b):
    """Return a if a >= b else b.

    >>> maximum(2, 3)
    3
    >>> maximum(7, 1)
    7
    >>> maximum(9, 4)
    9
    >>> maximum(5, 5)
    5
    >>> maximum(12, 3)
    12
    >>> maximum(8, 2)
    8
    >>> maximum(3, 7)
    7
    >>> maximum(10, 6)
    10
    """
    return a if a >= b else b


def minimum(a, b):
    """Return a if a <= b else b.

    >>> minimum(2, 3)
    2
    >>> minimum(7, 1)
    1
    >>> minimum(9, 4)
    4
    >>> minimum(5, 5)
    5
    >>> minimum(12, 3)
    3
    >>> minimum(8, 2)
    2
    >>> minimum(3, 7)
    3
    >>> minimum(10, 6)
    6
    """
    return a if a <= b else b


def power(a, b):
    """Return a ** b.

    >>> power(2, 3)
    8
    >>> power(7, 1)
    7
    >>> power(9, 4)
    6561
    >>> power(5, 5)
    3125
    >>> power(12, 3)
    1728
    >>> power(8, 2)
    64
    >>> power(3, 7)
    2187
    >>> power(10, 6)
    1000000
    """
    return a ** b


def modulo(a, b):
    """Return a % b.

    >>> modulo(2, 3)
    2
    >>> modulo(7, 1)
    0
    >>> modulo(9, 4)
    1
    >>> modulo(5, 5)
    0
    >>> modulo(12, 3)
    0
    >>> modulo(8, 2)
    0
    >>> modulo(3, 7)
    4
    >>> modulo(10, 6)
    4
    """
    return a % b
