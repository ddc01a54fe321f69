from django.contrib import admin

from .models import Experiment, RunRecord


class RunRecordInline(admin.TabularInline):
    model = RunRecord
    extra = 0
    fields = ('run_index', 'srps', 'seed', 'created_at')
    readonly_fields = fields


@admin.register(Experiment)
class ExperimentAdmin(admin.ModelAdmin):
    list_display = ('kind', 'label', 'master_seed', 'runs', 'created_at')
    list_filter = ('kind',)
    search_fields = ('label',)
    inlines = [RunRecordInline]


@admin.register(RunRecord)
class RunRecordAdmin(admin.ModelAdmin):
    list_display = ('experiment', 'run_index', 'srps', 'malicious_drops', 'created_at')
    list_filter = ('srps',)
