from .core import GENESIS, GENESIS_QC, Block, QuorumCertificate, TimeoutCertificate, TimeoutMsg, Transaction, Vote

__version__ = "0.1.0"
