import sys

from fedasync.cli import main

if __name__ == "__main__":
    sys.exit(main())
