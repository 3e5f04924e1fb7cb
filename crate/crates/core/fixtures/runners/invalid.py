class DHeap:
    def __init__(self, d):
        self.d = d
        self.items = []

    def insert(self, item)
        """Insert an item.

        >>> DHeap(2).insert(1)
        """
        self.items.append(item)
