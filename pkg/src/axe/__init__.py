"""Static detection of cross-chain vulnerabilities in bridge contract bytecode."""

import logging

__version__ = "0.1.0"

# library use stays quiet unless the caller configures logging; the CLI installs its own handler
logging.getLogger(__name__).addHandler(logging.NullHandler())
