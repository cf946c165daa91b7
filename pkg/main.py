import sys

from guidance.algas4 import main

if __name__ == "__main__":
    sys.exit(main())
