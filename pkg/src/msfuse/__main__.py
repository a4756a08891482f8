import sys

from msfuse.cli import main

sys.exit(main())
