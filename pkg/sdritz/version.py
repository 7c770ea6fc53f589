__version__ = '0.1.0'
__release__ = __version__ + 'b1'
