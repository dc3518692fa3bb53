"""styledate: painting creation-era classification and dating.

Handcrafted shape and color descriptors, Fisher-vector / bag-of-words
encoders, a small trainable convolutional network, chi-square-kernel
one-vs-all SVMs, and a multi-scale voting scheme that assigns an era
label to a full-size painting.
"""

__version__ = "0.1.0"
