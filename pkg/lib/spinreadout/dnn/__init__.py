"""CNN+LSTM classifier trained from scratch."""
from spinreadout.dnn.model import DnnClassifier  # noqa: F401
from spinreadout.dnn.model import DnnConfig  # noqa: F401
from spinreadout.dnn.model import DnnModel  # noqa: F401
from spinreadout.dnn.model import ParamCount  # noqa: F401
from spinreadout.dnn.model import Prediction  # noqa: F401
from spinreadout.dnn.model import backward  # noqa: F401
from spinreadout.dnn.model import forward  # noqa: F401
from spinreadout.dnn.model import init_params  # noqa: F401
from spinreadout.dnn.model import load_model  # noqa: F401
from spinreadout.dnn.model import loss  # noqa: F401
from spinreadout.dnn.model import param_count  # noqa: F401
from spinreadout.dnn.model import param_layout  # noqa: F401
from spinreadout.dnn.model import predict_proba  # noqa: F401
from spinreadout.dnn.model import save_model  # noqa: F401
from spinreadout.dnn.training import TrainConfig  # noqa: F401
from spinreadout.dnn.training import TrainResult  # noqa: F401
from spinreadout.dnn.training import train  # noqa: F401
