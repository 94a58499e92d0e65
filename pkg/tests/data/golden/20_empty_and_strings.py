"""Only a docstring and comments live here."""
# a comment that should vanish
