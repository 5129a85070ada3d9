import sys

from intervalchoice.cli import main

sys.exit(main())
