import pickle

from kubolab.errors import ConfigurationError, NumericalError, PartialResultError


def test_configuration_error_keeps_its_field_across_processes() -> None:
	error = pickle.loads(pickle.dumps(ConfigurationError("must be at least 3", field="lattice.L")))
	assert isinstance(error, ConfigurationError)
	assert error.field == "lattice.L"
	assert str(error) == "lattice.L: must be at least 3"
	assert str(pickle.loads(pickle.dumps(ConfigurationError("bad")))) == "bad"


def test_worker_errors_keep_their_metadata() -> None:
	numerical = pickle.loads(pickle.dumps(NumericalError("eigensolver failure", meta={"realization": 4})))
	assert numerical.meta == {"realization": 4}
	partial = pickle.loads(pickle.dumps(PartialResultError("2 of 5 realizations failed", [3, 1])))
	assert partial.failed_indices == [1, 3]
	assert str(partial) == "2 of 5 realizations failed"
