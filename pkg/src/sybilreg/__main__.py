import sys

from sybilreg.cli import main

sys.exit(main())
