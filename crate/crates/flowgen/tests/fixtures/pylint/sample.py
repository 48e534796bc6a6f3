import os
import sys


def Compute(a, b):
    try:
        total = a + b
    except TypeError:
        return None
    except ValueError as err:
        raise err
    unused = 3
    if total == None:
        return 0
    return total


def helper(x=[]):
    x.append(undefined_name)
    return x
