import sys

from rtlsquad.cli import main

sys.exit(main())
