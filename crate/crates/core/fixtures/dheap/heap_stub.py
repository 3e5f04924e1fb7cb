class Item:
    """A queue entry identified by ``number`` and ordered by ``priority``."""

    def __init__(self, number, priority):
        self.number = number
        self.priority = priority

    def __eq__(self, other):
        return isinstance(other, Item) and self.number == other.number

    def __hash__(self):
        return hash(self.number)

    def __repr__(self):
        return f"Item({self.number}, {self.priority})"


class DHeap:
    """A d-ary min-heap keyed on item priority."""

    def __init__(self, arity):
        """Create an empty heap with the given arity."""
        pass

    def insert(self, item):
        """Insert an item into the heap."""
        pass

    def pop(self):
        """Remove and return the item with the smallest priority."""
        pass

    def front(self):
        """Return the item with the smallest priority without removing it."""
        pass

    def increase_priority(self, item):
        """Move an item toward the front by lowering its priority value."""
        pass

    def decrease_priority(self, item):
        """Move an item away from the front by raising its priority value."""
        pass

    def contains(self, item):
        """Report whether an item with the same number is queued."""
        pass

    def __len__(self):
        """Number of queued items."""
        pass

    def is_empty(self):
        """True when no items are queued."""
        pass

    def summary(self):
        """One-line description of the heap state."""
        pass

    def __repr__(self):
        """Show arity and the backing array in heap order."""
        pass

    def __str__(self):
        """Human-readable size report."""
        pass
