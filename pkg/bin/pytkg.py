""" Learn temporal rules and forecast with them. """

from pytkg.cli import main

if __name__ == '__main__':
    main()
