from .generate import DatasetConfig, build_lexicon, class_counts, generate_dataset, make_template
from .io import DatasetLoadError, load_dataset, load_synonyms, load_vocab, split_samples
from .ppm import PPMFormatError, decode_ppm, encode_ppm, quantize, read_frame, write_frame
from .types import (
    LABEL_INDEX,
    LABELS,
    LAYOUT_ORDER,
    SPLITS,
    DataError,
    FrameSample,
    LayoutTemplate,
    SynonymTable,
    TextBox,
)
from .vocab import Vocab, tokenize
