import sys

from spinreadout.cli import main

sys.exit(main())
