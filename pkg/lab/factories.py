import factory
from factory.django import DjangoModelFactory

from simnet.scenario import ScenarioConfig

from .models import Experiment, RunRecord


class ExperimentFactory(DjangoModelFactory):
    class Meta:
        model = Experiment

    kind = 'simulate'
    label = factory.Faker('catch_phrase')
    config = factory.LazyFunction(lambda: ScenarioConfig(runs=3).as_config())
    master_seed = factory.Sequence(lambda n: n)
    runs = 3


class RunRecordFactory(DjangoModelFactory):
    class Meta:
        model = RunRecord

    experiment = factory.SubFactory(ExperimentFactory)
    run_index = factory.Sequence(lambda n: n)
    seed = factory.LazyAttribute(lambda o: f'{o.experiment.master_seed}/{o.run_index}')
    srps = True
    metrics = factory.Dict({'packets_sent': 40, 'delivered': 38, 'malicious_drops': 0})
