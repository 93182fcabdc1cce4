import sys

from dwrfoil._cli import main

sys.exit(main())
