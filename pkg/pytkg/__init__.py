""" Make the pytkg module importable. """
