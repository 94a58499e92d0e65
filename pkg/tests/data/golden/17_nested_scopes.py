class Outer:
    label = "o"

    class Inner:
        def probe(self):
            return Outer

    def which(self):
        local = Outer.label
        return local
