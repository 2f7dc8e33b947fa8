import sys

from mare.cli import main

sys.exit(main())
