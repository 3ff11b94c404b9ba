import sys

from dup.cli import main

sys.exit(main())
