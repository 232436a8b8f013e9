import sys

from spinphoton.cli import main

if __name__ == "__main__":
    sys.exit(main())
