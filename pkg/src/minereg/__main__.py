import sys

from minereg.cli import main

sys.exit(main())
