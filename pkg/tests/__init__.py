""" Tests for pytkg library. """
