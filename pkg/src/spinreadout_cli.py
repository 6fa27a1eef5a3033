#!/usr/bin/env python3
# flake8: noqa

# Load modules from <repo>/lib
import os
import sys
sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, 'lib'))

from spinreadout.cli import main  # noqa
sys.exit(main())
